#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqcnn/seqeval.hpp"

namespace seqcnn {

enum class EvalMode { Spliced, Convolutional };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& text);  // "spliced" or "conv"

struct LayerCost {
  std::size_t layerIndex = 0;
  LayerKind kind = LayerKind::Conv;
  std::uint64_t macs = 0;
  std::uint64_t elementwiseOps = 0;  // pooling comparisons, BN affines, activations, softmax
};

struct CostReport {
  std::vector<LayerCost> perLayer;
  std::uint64_t totalMacs = 0;
  std::uint64_t totalElementwiseOps = 0;
  EvalMode mode = EvalMode::Convolutional;
  std::size_t uttLen = 0;
  std::optional<double> framesPerSecond;
};

/// Cost of one network pass over `inputTime` frames of a single sample.
/// conv: outT*outF*outC*kT*kF*inC; dense: outputFrames*inDim*outDim.
CostReport count_macs(const ArchitectureSpec& spec, std::size_t inputTime);

struct EvalCostComparison {
  std::size_t uttLen = 0;
  std::uint64_t splicedMacs = 0;  // uttLen passes over one window each
  std::uint64_t convMacs = 0;     // one pass over the context-padded utterance
  double ratio = 0.0;             // splicedMacs / convMacs
  double inputFrameRatio = 0.0;   // uttLen*windowLen / (uttLen + windowLen - 1)
};

EvalCostComparison compare_eval_costs(const ArchitectureSpec& spec, std::size_t uttLen);

/// Whole-utterance evaluation cost in the given mode.
CostReport eval_cost(const ArchitectureSpec& spec, std::size_t uttLen, EvalMode mode);

struct BenchmarkOptions {
  std::size_t warmup = 3;
  std::size_t repetitions = 10;
  std::size_t threads = 1;  // utterances evaluated concurrently
};

struct BenchmarkResult {
  EvalMode mode = EvalMode::Convolutional;
  double framesPerSecond = 0.0;  // labelled frames / median wall-clock seconds
  double medianSeconds = 0.0;
  std::vector<double> seconds;   // per timed repetition
  std::uint64_t framesPerRepetition = 0;
  std::size_t threads = 1;
};

/// Times full evaluation of every utterance, repeated; warm-up passes are
/// excluded from the median. Uses std::chrono::steady_clock.
BenchmarkResult benchmark_eval(const Network& net, const std::vector<Utterance>& utterances, EvalMode mode,
                               const BenchmarkOptions& options = {});

/// Aligned-column text report.
std::string format_cost_table(const CostReport& report);
/// `key = value` report: mode, utt_len, total_macs, total_elementwise_ops,
/// frames_per_second (when measured) and a `[layer N]` section per layer.
std::string format_cost_keyvalue(const CostReport& report);

}  // namespace seqcnn
