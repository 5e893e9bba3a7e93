#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqcnn/batching.hpp"
#include "seqcnn/io.hpp"
#include "seqcnn/network.hpp"

namespace seqcnn {

enum class Optimizer { Sgd, Nag };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& text);

struct TrainConfig {
  Optimizer optimizer = Optimizer::Nag;
  double baseLr = 0.003;
  double momentum = 0.99;
  std::vector<std::uint64_t> lrMilestones{150'000'000, 250'000'000, 350'000'000};
  double lrFactor = 3.0;
  std::uint64_t momentumDropAt = 100'000'000;
  double momentumAfter = 0.95;
  double l2 = 1e-6;
  std::size_t batchSize = 128;
  DType dtype = DType::F32;
  std::uint64_t seed = 0;

  BatchMode mode = BatchMode::Windows;
  std::size_t numFrames = 6000;  // utterance-batch frame budget
  double gamma = 0.8;

  std::uint64_t maxFrames = 200'000;      // label-frame budget
  std::uint64_t checkpointEvery = 50'000;  // label frames; 0 disables
  std::string checkpointDir;               // empty: keep checkpoints in memory only
  std::uint64_t evalEvery = 0;             // label frames between held-out evaluations
  std::optional<double> stopAtAccuracy;    // held-out accuracy that ends training

  /// Weight of the cross-entropy gradient added to a sequence criterion.
  double ceWeight = 0.1;

  void validate() const;

  /// Plain SGD at learning rate 0.03.
  static TrainConfig sgd_defaults();
  /// NAG at learning rate 0.003, momentum 0.99 dropping to 0.95.
  static TrainConfig nag_defaults();
};

/// baseLr / lrFactor^k, k = number of milestones with framesSeen >= milestone.
double lr_schedule(const TrainConfig& cfg, std::uint64_t framesSeen);

/// `momentum` before momentumDropAt, `momentumAfter` from it on.
double momentum_schedule(const TrainConfig& cfg, std::uint64_t framesSeen);

/// Nesterov momentum in the reformulated form, with g' = g + l2 * theta:
///   v_new = mu * v - lr * g'
///   theta += -mu * v + (1 + mu) * v_new
/// With mu = 0 this is theta -= lr * g'. Returns false and changes nothing
/// when any gradient entry is non-finite.
bool nag_step(std::span<const ParamRef> params, std::vector<Tensor>& velocity, double lr, double momentum,
              double l2);

/// theta -= lr * (g + l2 * theta). Returns false on a non-finite gradient.
bool sgd_step(std::span<const ParamRef> params, double lr, double l2);

/// seqGrad + ceWeight * ceGrad.
Tensor combined_criterion_grad(const Tensor& seqGrad, const Tensor& ceGrad, double ceWeight);

struct CriterionResult {
  double loss = 0.0;
  Tensor gradLogits;
};

/// Utterance-level criterion over logit rows.
class SequenceCriterion {
 public:
  virtual ~SequenceCriterion() = default;
  virtual std::string name() const = 0;
  virtual CriterionResult evaluate(const Tensor& logits, std::span<const std::int32_t> labels) const = 0;
};

/// Expected frame error, mean over rows of 1 - p(label).
class FrameMbrCriterion : public SequenceCriterion {
 public:
  std::string name() const override { return "frame-mbr"; }
  CriterionResult evaluate(const Tensor& logits, std::span<const std::int32_t> labels) const override;
};

struct TrainState {
  std::vector<Tensor> velocity;
  std::uint64_t framesSeen = 0;
  std::uint64_t stepCount = 0;
  std::uint64_t rejectedSteps = 0;
  std::vector<MetricsRow> metrics;
};

struct StepReport {
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  double momentum = 0.0;
  std::uint64_t frames = 0;
  bool applied = false;
  bool diverged = false;
};

struct TrainResult {
  TrainState state;
  bool diverged = false;
  std::optional<std::uint64_t> framesToTarget;
  std::optional<double> heldOutAccuracy;
  std::vector<std::string> checkpointFiles;
  std::size_t checkpointsTaken = 0;
};

/// Frame accuracy of inference-mode posteriors, evaluated convolutionally
/// when the architecture allows it and spliced otherwise.
double frame_accuracy(const Network& net, const Corpus& corpus);

class Trainer {
 public:
  Trainer(Network& net, const Corpus& train, TrainConfig cfg, const Corpus* heldOut = nullptr);

  /// Optional sequence criterion; the cross-entropy gradient is added
  /// with weight cfg.ceWeight (0 trains on the criterion alone).
  void set_sequence_criterion(std::shared_ptr<const SequenceCriterion> criterion) {
    criterion_ = std::move(criterion);
  }

  StepReport step();
  TrainResult run();

  const TrainState& state() const { return state_; }
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  void take_checkpoint(TrainResult& result);

  Network& net_;
  const Corpus& train_;
  const Corpus* heldOut_;
  TrainConfig cfg_;
  EpochIterator batches_;
  TrainState state_;
  std::shared_ptr<const SequenceCriterion> criterion_;
  std::optional<Checkpoint> lastGood_;
};

TrainResult train_ce(Network& net, const Corpus& train, const TrainConfig& cfg, const Corpus* heldOut = nullptr);

/// Snapshot of parameters, BN statistics and optimizer state.
Checkpoint make_checkpoint(Network& net, const TrainState& state);
/// Restores parameters and BN statistics; returns the stored train state.
TrainState apply_checkpoint(Network& net, const Checkpoint& ckpt);

}  // namespace seqcnn
