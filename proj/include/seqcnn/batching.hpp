#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "seqcnn/rng.hpp"
#include "seqcnn/seqeval.hpp"

namespace seqcnn {

using Corpus = std::vector<Utterance>;

struct BatchAssemblyConfig {
  std::size_t numFrames = 6000;
  std::uint64_t rngSeed = 0;

  void validate() const;
};

/// Utterances of similar length, each cropped to a random contiguous
/// segment of the shortest member's length.
struct UtteranceBatch {
  std::vector<Utterance> utterances;  // cropped copies
  std::vector<std::size_t> sources;   // corpus indices
  std::vector<std::size_t> offsets;   // crop start per member
  std::size_t croppedLen = 0;
  std::size_t numUtts = 0;  // floor(numFrames / targUttLen)
  std::size_t targUttLen = 0;

  std::size_t label_frames() const { return croppedLen * utterances.size(); }
};

/// Probability that each utterance supplies the target length:
/// proportional to its length among utterances no longer than numFrames.
std::vector<double> target_length_distribution(const Corpus& corpus, std::size_t numFrames);

/// Draws batches without replacement; a new epoch starts when every
/// eligible utterance has been used. The last batch of an epoch holds
/// fewer than numUtts members when too few utterances remain.
class UtteranceBatcher {
 public:
  UtteranceBatcher(const Corpus& corpus, BatchAssemblyConfig cfg);

  UtteranceBatch next(Rng& rng);

  std::size_t remaining() const { return pool_.size(); }
  std::size_t epoch() const { return epoch_; }
  std::size_t eligible() const { return eligible_.size(); }

 private:
  const Corpus* corpus_;
  BatchAssemblyConfig cfg_;
  std::vector<std::size_t> eligible_;
  std::vector<std::size_t> pool_;
  std::size_t epoch_ = 0;
};

/// One batch drawn from the full corpus.
UtteranceBatch assemble_utterance_batch(const Corpus& corpus, const BatchAssemblyConfig& cfg, Rng& rng);

/// Network input for an utterance batch: each member edge-padded by the
/// geometry's context, [n, 1, left + croppedLen + right, F].
Tensor utterance_batch_input(const UtteranceBatch& batch, const InputGeometry& geometry, DType dtype);

/// Member labels concatenated in row order of the network output.
std::vector<std::int32_t> utterance_batch_labels(const UtteranceBatch& batch);

/// p_i = f_i^gamma / sum_j f_j^gamma.
std::vector<double> balanced_probabilities(std::span<const std::uint64_t> frequencies, double gamma);

struct FrameRef {
  std::uint32_t utterance = 0;
  std::uint32_t frame = 0;
};

class BalancedSampler {
 public:
  /// Counts labels over the corpus. numStates == 0 infers it from the
  /// largest label present.
  static BalancedSampler build(const Corpus& corpus, double gamma = 0.8, std::size_t numStates = 0);

  double gamma() const { return gamma_; }
  std::size_t num_classes() const { return frequencies_.size(); }
  std::size_t labelled_frames() const { return total_; }
  const std::vector<std::uint64_t>& frequencies() const { return frequencies_; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  const std::vector<FrameRef>& frames_of(std::size_t cls) const { return index_.at(cls); }

  std::size_t draw_class(Rng& rng) const;
  FrameRef draw(Rng& rng) const;

 private:
  double gamma_ = 0.8;
  std::size_t total_ = 0;
  std::vector<std::uint64_t> frequencies_;
  std::vector<double> probabilities_;
  std::vector<double> cumulative_;
  std::vector<std::vector<FrameRef>> index_;
};

struct LabelledWindow {
  Tensor window;  // [left + 1 + right, F]
  std::int32_t label = 0;
  FrameRef source;
};

LabelledWindow sample_ce_window(const BalancedSampler& sampler, const Corpus& corpus, std::size_t left,
                                std::size_t right, Rng& rng);

struct WindowBatch {
  Tensor input;  // [N, 1, W, F]
  std::vector<std::int32_t> labels;
  std::vector<FrameRef> sources;
};

WindowBatch sample_window_batch(const BalancedSampler& sampler, const Corpus& corpus,
                                const InputGeometry& geometry, std::size_t batchSize, Rng& rng,
                                DType dtype);

enum class BatchMode { Windows, UtteranceBatches };

struct EpochConfig {
  BatchMode mode = BatchMode::Windows;
  std::size_t batchSize = 128;
  BatchAssemblyConfig assembly;
  InputGeometry geometry;
  double gamma = 0.8;
  DType dtype = DType::F32;
  std::uint64_t seed = 0;
};

using Minibatch = std::variant<WindowBatch, UtteranceBatch>;

/// Deterministic minibatch stream. `next` returns nullopt once per epoch
/// boundary; the following call opens the next epoch.
///
/// Windows mode draws with replacement; an epoch is
/// ceil(labelled frames / batchSize) batches. Utterance mode ends an epoch
/// when every eligible utterance has been used once.
class EpochIterator {
 public:
  EpochIterator(const Corpus& corpus, EpochConfig cfg);

  std::optional<Minibatch> next();

  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;
  const BalancedSampler* sampler() const { return sampler_ ? &*sampler_ : nullptr; }

 private:
  const Corpus* corpus_;
  EpochConfig cfg_;
  Rng rng_;
  std::optional<BalancedSampler> sampler_;
  std::optional<UtteranceBatcher> batcher_;
  std::size_t epoch_ = 0;
  std::size_t emitted_ = 0;
  bool atBoundary_ = false;
};

}  // namespace seqcnn
