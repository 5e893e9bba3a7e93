#include "seqcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqcnn/rng.hpp"

namespace seqcnn {

std::vector<std::string> GradCheckReport::failing_tensors() const {
  std::vector<std::string> out;
  for (const auto& t : tensors) {
    if (!t.pass) out.push_back(t.name);
  }
  return out;
}

namespace {

// The step crossed a point where the loss is not differentiable (a ReLU
// or max-pool switch): the one-sided slopes disagree and the analytic
// gradient matches one of them.
bool straddles_kink(double analytic, double up, double base, double down, const GradCheckOptions& o) {
  const double right = (up - base) / o.epsilon;
  const double left = (base - down) / o.epsilon;
  const double scale = std::max({std::abs(right), std::abs(left), o.relativeFloor});
  if (std::abs(right - left) < 10.0 * o.tolerance * scale) return false;
  const auto close = [&](double side) {
    return std::abs(side - analytic) <= 100.0 * o.tolerance * std::max({std::abs(side), std::abs(analytic), o.relativeFloor});
  };
  return close(right) || close(left);
}

}  // namespace

GradCheckReport grad_check(Differentiable& target, const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;
  auto params = target.parameters();
  for (const auto& p : params) {
    if (p.value->dtype() != DType::F64) {
      report.failure = "gradient checks need binary64 tensors; '" + p.name + "' is " +
                       to_string(p.value->dtype());
      return report;
    }
  }
  target.compute_gradients();
  const double base = target.loss();
  if (!std::isfinite(base)) {
    report.finite = false;
    report.failure = "non-finite loss at the unperturbed point";
    return report;
  }

  Rng rng(options.seed);
  report.pass = true;
  for (const auto& p : params) {
    TensorCheck tc;
    tc.name = p.name;
    std::vector<std::size_t> entries(p.value->numel());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.maxEntriesPerTensor != 0 && entries.size() > options.maxEntriesPerTensor) {
      for (std::size_t i = 0; i < options.maxEntriesPerTensor; ++i) {
        std::swap(entries[i], entries[i + rng.below(entries.size() - i)]);
      }
      entries.resize(options.maxEntriesPerTensor);
    }
    for (std::size_t e : entries) {
      const double orig = p.value->get(e);
      p.value->set(e, orig + options.epsilon);
      const double up = target.loss();
      p.value->set(e, orig - options.epsilon);
      const double down = target.loss();
      p.value->set(e, orig);
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.finite = false;
        report.pass = false;
        tc.pass = false;
        report.failure = "non-finite loss while perturbing '" + p.name + "'";
        continue;
      }
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double analytic = p.grad->get(e);
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.relativeFloor});
      const double rel = abs_err / denom;
      if (rel >= options.tolerance && straddles_kink(analytic, up, base, down, options)) {
        ++tc.kinks;
        continue;
      }
      if (rel > tc.maxRelError || tc.entriesChecked == 0) {
        tc.maxRelError = rel;
        tc.worstEntry = e;
      }
      tc.maxAbsError = std::max(tc.maxAbsError, abs_err);
      ++tc.entriesChecked;
    }
    tc.pass = report.finite && tc.maxRelError < options.tolerance;
    if (!tc.pass) report.pass = false;
    report.maxRelError = std::max(report.maxRelError, tc.maxRelError);
    report.tensors.push_back(tc);
  }
  std::size_t probed = 0;
  for (const auto& tc : report.tensors) {
    probed += tc.entriesChecked + tc.kinks;
    report.kinks += tc.kinks;
  }
  if (report.kinks > std::max<std::size_t>(1, probed / 20)) {
    report.pass = false;
    report.failure = std::to_string(report.kinks) + " of " + std::to_string(probed) +
                     " probes straddled a non-differentiable point";
  }
  if (!report.pass && report.failure.empty()) {
    report.failure = "relative error above " + std::to_string(options.tolerance);
  }
  return report;
}

NetworkLoss::NetworkLoss(Network& net, Tensor input, std::vector<std::int32_t> labels)
    : net_(net), input_(std::move(input)), labels_(std::move(labels)) {}

double NetworkLoss::loss() {
  return cross_entropy_from_logits(net_.forward(input_, ForwardMode::TrainFrozenStats), labels_).meanLoss;
}

void NetworkLoss::compute_gradients() {
  net_.zero_grads();
  const Tensor logits = net_.forward(input_, ForwardMode::TrainFrozenStats);
  net_.backward(cross_entropy_from_logits(logits, labels_).gradLogits);
}

GradCheckReport grad_check(Network& net, const Tensor& input, std::span<const std::int32_t> labels,
                           const GradCheckOptions& options) {
  NetworkLoss target(net, input, std::vector<std::int32_t>(labels.begin(), labels.end()));
  return grad_check(target, options);
}

void perturb_offsets(Network& net, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (const ParamRef& p : net.params()) {
    const auto ends = [&](std::string_view suffix) {
      return p.name.size() >= suffix.size() && p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (!ends(".bias") && !ends(".gamma") && !ends(".beta")) continue;
    visit_dtype(p.value->dtype(), [&]<class T>() {
      for (T& v : p.value->values<T>()) v += static_cast<T>(scale * rng.normal());
    });
  }
}

}  // namespace seqcnn
