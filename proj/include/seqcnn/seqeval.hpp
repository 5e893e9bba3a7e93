#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqcnn/network.hpp"

namespace seqcnn {

struct Utterance {
  std::string id;
  Tensor features;                   // [T, F]
  std::vector<std::int32_t> labels;  // empty or exactly T state ids

  std::size_t frames() const { return features.empty() ? 0 : features.dim(0); }
  bool labelled() const { return !labels.empty(); }
  /// Throws on a malformed utterance; numStates == 0 skips the range check.
  void validate(std::size_t featDim, std::size_t numStates = 0) const;
};

/// One posterior row per input frame, [T, numStates].
struct PosteriorMatrix {
  Tensor values;

  std::size_t frames() const { return values.empty() ? 0 : values.dim(0); }
};

struct EquivalenceReport {
  double maxAbsDiff = 0.0;
  double meanAbsDiff = 0.0;
  std::size_t framesCompared = 0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Work counters filled by the evaluators.
struct EvalStats {
  std::uint64_t inputFrames = 0;  // frames fed to the network, duplicates included
  std::uint64_t passes = 0;       // network invocations
  std::uint64_t outputFrames = 0;
};

class NotStreamableError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// [left + T + right, F]; edge frames are replicated outward.
Tensor pad_utterance(const Tensor& features, std::size_t left, std::size_t right);

/// Window of `left + 1 + right` frames around `center` under the
/// replication edge policy, [W, F].
Tensor extract_window(const Tensor& features, std::size_t center, std::size_t left,
                      std::size_t right);

/// One network pass per frame over its own context window. Windows are
/// batched `windowsPerPass` at a time; the batching does not affect results.
PosteriorMatrix evaluate_spliced(const Network& net, const Utterance& utt, EvalStats* stats = nullptr,
                                 std::size_t windowsPerPass = 64);

/// One pass over the whole edge-padded utterance. Requires a streamable
/// architecture; otherwise throws NotStreamableError naming the layer.
PosteriorMatrix evaluate_convolutional(const Network& net, const Utterance& utt,
                                       EvalStats* stats = nullptr);

/// Runs both evaluators with a copy of `net` in `compute` precision and
/// compares the posteriors elementwise.
EquivalenceReport check_equivalence(const Network& net, const Utterance& utt, double tolerance,
                                    DType compute = DType::F64);

/// Output frames of a naive full-utterance pass without context padding.
/// The head consumes its time span unless the top conv layer pads time,
/// in which case the padded map already has one frame per output.
std::size_t output_length(const ArchitectureSpec& spec, std::size_t uttLen);

/// Row-stochasticity check: largest |row sum - 1|.
double max_row_sum_error(const Tensor& probs);

namespace testing {

/// The convolutional evaluator with the streamability gate removed.
/// Output rows follow whatever frame rate the architecture produces.
PosteriorMatrix evaluate_naive_full_pass(const Network& net, const Utterance& utt);

/// Per-layer inference maps of the naive full pass over the edge-padded
/// utterance, as `Network::trace` returns them.
std::vector<Tensor> trace_full_pass(const Network& net, const Utterance& utt);

/// Per-layer inference maps of the context window centred on `frame`.
std::vector<Tensor> trace_window(const Network& net, const Utterance& utt, std::size_t frame);

}  // namespace testing

}  // namespace seqcnn
