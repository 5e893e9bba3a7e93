#include "seqcnn/cost.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <sstream>
#include <thread>

#include "seqcnn/keyvalue.hpp"

namespace seqcnn {

std::string to_string(EvalMode mode) { return mode == EvalMode::Spliced ? "spliced" : "conv"; }

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "spliced") return EvalMode::Spliced;
  if (text == "conv" || text == "convolutional") return EvalMode::Convolutional;
  throw std::invalid_argument("unknown evaluation mode '" + text + "' (expected spliced or conv)");
}

CostReport count_macs(const ArchitectureSpec& spec, std::size_t inputTime) {
  const ShapeReport shapes = infer_shapes(spec, inputTime);
  CostReport r;
  r.uttLen = inputTime;
  for (const auto& ls : shapes.perLayer) {
    const auto& layer = spec.layers[ls.layerIndex];
    LayerCost c;
    c.layerIndex = ls.layerIndex;
    c.kind = kind_of(layer);
    const std::uint64_t outElems = std::uint64_t{ls.outTime} * ls.outFreq * ls.outChannels;
    if (const auto* conv = std::get_if<ConvConfig>(&layer)) {
      c.macs = outElems * conv->kernelTime * conv->kernelFreq * conv->inChannels;
    } else if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      c.macs = std::uint64_t{ls.outTime} * dense->inDim * dense->outDim;
    } else if (const auto* pool = std::get_if<PoolConfig>(&layer)) {
      c.elementwiseOps = outElems * pool->kernelTime * pool->kernelFreq;
    } else if (std::holds_alternative<BatchNormSpec>(layer) || std::holds_alternative<ActivationSpec>(layer) ||
               std::holds_alternative<SoftmaxSpec>(layer)) {
      c.elementwiseOps = outElems;
    }
    r.totalMacs += c.macs;
    r.totalElementwiseOps += c.elementwiseOps;
    r.perLayer.push_back(c);
  }
  return r;
}

CostReport eval_cost(const ArchitectureSpec& spec, std::size_t uttLen, EvalMode mode) {
  if (uttLen == 0) throw std::invalid_argument("eval_cost: empty utterance");
  const std::size_t w = spec.geometry.windowLen;
  CostReport r;
  if (mode == EvalMode::Spliced) {
    r = count_macs(spec, w);
    for (auto& l : r.perLayer) {
      l.macs *= uttLen;
      l.elementwiseOps *= uttLen;
    }
    r.totalMacs *= uttLen;
    r.totalElementwiseOps *= uttLen;
  } else {
    if (const auto issue = streamability_issue(spec)) throw NotStreamableError("not streamable: " + *issue);
    r = count_macs(spec, uttLen + w - 1);
  }
  r.mode = mode;
  r.uttLen = uttLen;
  return r;
}

EvalCostComparison compare_eval_costs(const ArchitectureSpec& spec, std::size_t uttLen) {
  EvalCostComparison c;
  c.uttLen = uttLen;
  c.splicedMacs = eval_cost(spec, uttLen, EvalMode::Spliced).totalMacs;
  c.convMacs = eval_cost(spec, uttLen, EvalMode::Convolutional).totalMacs;
  c.ratio = static_cast<double>(c.splicedMacs) / static_cast<double>(c.convMacs);
  const double w = static_cast<double>(spec.geometry.windowLen);
  c.inputFrameRatio = static_cast<double>(uttLen) * w / (static_cast<double>(uttLen) + w - 1.0);
  return c;
}

namespace {

void evaluate_all(const Network& net, const std::vector<Utterance>& utts, EvalMode mode, std::size_t threads) {
  auto one = [&](const Utterance& u) {
    if (mode == EvalMode::Spliced) {
      (void)evaluate_spliced(net, u);
    } else {
      (void)evaluate_convolutional(net, u);
    }
  };
  if (threads <= 1) {
    for (const auto& u : utts) one(u);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < utts.size(); i = next++) one(utts[i]);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

BenchmarkResult benchmark_eval(const Network& net, const std::vector<Utterance>& utterances, EvalMode mode,
                               const BenchmarkOptions& options) {
  if (utterances.empty()) throw std::invalid_argument("benchmark_eval: no utterances");
  if (options.repetitions == 0) throw std::invalid_argument("benchmark_eval: repetitions must be positive");
  if (mode == EvalMode::Convolutional) {
    if (const auto issue = streamability_issue(net.spec())) throw NotStreamableError("not streamable: " + *issue);
  }
  BenchmarkResult r;
  r.mode = mode;
  r.threads = std::max<std::size_t>(1, options.threads);
  for (const auto& u : utterances) r.framesPerRepetition += u.frames();
  for (std::size_t i = 0; i < options.warmup; ++i) evaluate_all(net, utterances, mode, r.threads);
  for (std::size_t i = 0; i < options.repetitions; ++i) {
    const auto start = std::chrono::steady_clock::now();
    evaluate_all(net, utterances, mode, r.threads);
    const auto stop = std::chrono::steady_clock::now();
    r.seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> sorted = r.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.medianSeconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.framesPerSecond = static_cast<double>(r.framesPerRepetition) / r.medianSeconds;
  return r;
}

std::string format_cost_table(const CostReport& report) {
  std::ostringstream os;
  os << "mode " << to_string(report.mode) << ", utterance length " << report.uttLen << '\n';
  os << std::left << std::setw(7) << "layer" << std::setw(11) << "kind" << std::right << std::setw(16) << "macs"
     << std::setw(16) << "elementwise" << '\n';
  for (const auto& l : report.perLayer) {
    os << std::left << std::setw(7) << l.layerIndex << std::setw(11) << to_string(l.kind) << std::right
       << std::setw(16) << l.macs << std::setw(16) << l.elementwiseOps << '\n';
  }
  os << std::left << std::setw(18) << "total" << std::right << std::setw(16) << report.totalMacs << std::setw(16)
     << report.totalElementwiseOps << '\n';
  if (report.framesPerSecond) os << "frames per second " << format_double(*report.framesPerSecond) << '\n';
  return os.str();
}

std::string format_cost_keyvalue(const CostReport& report) {
  std::ostringstream os;
  os << "mode = " << to_string(report.mode) << '\n'
     << "utt_len = " << report.uttLen << '\n'
     << "total_macs = " << report.totalMacs << '\n'
     << "total_elementwise_ops = " << report.totalElementwiseOps << '\n';
  if (report.framesPerSecond) os << "frames_per_second = " << format_double(*report.framesPerSecond) << '\n';
  for (const auto& l : report.perLayer) {
    os << "\n[layer " << l.layerIndex << "]\n"
       << "kind = " << to_string(l.kind) << '\n'
       << "macs = " << l.macs << '\n'
       << "elementwise_ops = " << l.elementwiseOps << '\n';
  }
  return os.str();
}

}  // namespace seqcnn
