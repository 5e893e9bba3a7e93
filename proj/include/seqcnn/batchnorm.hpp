#pragma once

#include <cstdint>
#include <span>

#include "seqcnn/tensor.hpp"

namespace seqcnn {

/// Learned per-channel scale/shift plus running statistics for inference.
///
/// Statistics are taken per channel over every (sample, time, frequency)
/// position of a [N, C, T, F] batch, using the biased (population)
/// variance for both normalization and the running average. The running
/// average is `running = momentum * running + (1 - momentum) * batch`,
/// except that the first update adopts the batch statistics directly.
struct BatchNormState {
  std::size_t channels = 0;
  Tensor gamma;        // [C]
  Tensor beta;         // [C]
  Tensor runningMean;  // [C]
  Tensor runningVar;   // [C]
  double epsilon = 1e-5;
  double momentum = 0.9;
  std::uint64_t updateCount = 0;

  static BatchNormState create(std::size_t channels, DType dtype, double epsilon = 1e-5,
                               double momentum = 0.9);
  void validate() const;
};

struct BatchStats {
  Tensor mean;  // [C]
  Tensor var;   // [C], biased
};

struct BnTrainResult {
  Tensor output;
  BatchStats stats;
};

struct BnGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchStats bn_batch_stats(const Tensor& x);

/// Normalizes with batch statistics. Running statistics are folded in when
/// `updateRunning` is set (training); gradient checks pass false.
BnTrainResult bn_forward_train(const Tensor& x, BatchNormState& state, bool updateRunning = true);

/// Batch-statistics normalization without touching the running averages.
BnTrainResult bn_forward_batch(const Tensor& x, const BatchNormState& state);

/// Folds one batch's statistics into the running averages.
void bn_update_running(BatchNormState& state, const BatchStats& stats);

/// Position-wise affine map using the running statistics.
Tensor bn_forward_infer(const Tensor& x, const BatchNormState& state);

BnGrads bn_backward(const Tensor& x, const BatchNormState& state, const BatchStats& stats,
                    const Tensor& gradOut);

struct ChannelStats {
  double mean = 0.0;
  double var = 0.0;
  std::size_t count = 0;
};

/// Statistics of one channel pooled over every frame of every utterance
/// feature map ([C, T_i, F] each), as a single batch-norm minibatch sees them.
ChannelStats sequence_batch_stats(std::span<const Tensor> utterances, std::size_t channel);

}  // namespace seqcnn
