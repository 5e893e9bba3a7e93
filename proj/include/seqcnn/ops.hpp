#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "seqcnn/tensor.hpp"

namespace seqcnn {

// Layer primitives over [N, C, T, F] tensors (batch, channel, time, frequency).
//
// Convolution is cross-correlation (no kernel flip) with zero padding and
// floor-mode output extents. All kernels are single-threaded and accumulate
// in a fixed order, so results are bit-reproducible on one platform.

struct ConvConfig {
  std::size_t inChannels = 1;
  std::size_t outChannels = 1;
  std::size_t kernelTime = 3;
  std::size_t kernelFreq = 3;
  std::size_t padTime = 0;
  std::size_t padFreq = 0;
  std::size_t strideTime = 1;
  std::size_t strideFreq = 1;
  bool bias = true;

  bool operator==(const ConvConfig&) const = default;
};

struct ConvParams {
  ConvConfig config;
  Tensor weights;  // [outC, inC, kT, kF]
  Tensor bias;     // [outC], empty when config.bias is false

  static ConvParams zeros(const ConvConfig& config, DType dtype);
  void validate() const;
};

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;  // empty when the layer has no bias
};

struct PoolConfig {
  std::size_t kernelTime = 1;
  std::size_t kernelFreq = 2;
  std::size_t strideTime = 1;
  std::size_t strideFreq = 2;

  bool operator==(const PoolConfig&) const = default;
  void validate() const;
};

/// Winning input position (flat index into the pooled input) per output cell.
struct PoolIndex {
  Shape inputShape;
  Shape outputShape;
  std::vector<std::size_t> positions;
};

struct PoolResult {
  Tensor output;
  PoolIndex argmax;
};

struct DenseParams {
  std::size_t inDim = 1;
  std::size_t outDim = 1;
  Tensor weights;  // [outDim, inDim]
  Tensor bias;     // [outDim]

  static DenseParams zeros(std::size_t inDim, std::size_t outDim, DType dtype);
  void validate() const;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

/// Output extent of a sliding window; throws ShapeError when the window
/// does not fit even once.
std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t pad,
                          std::size_t stride, const char* dimension);

Tensor conv2d_forward(const Tensor& input, const ConvParams& params);
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& gradOut);

PoolResult maxpool2d_forward(const Tensor& input, const PoolConfig& config);
Tensor maxpool2d_backward(const PoolIndex& argmax, const Tensor& gradOut);

Tensor dense_forward(const Tensor& input, const DenseParams& params);
DenseGrads dense_backward(const Tensor& input, const DenseParams& params,
                          const Tensor& gradOut);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& gradOut);

Tensor softmax_rows(const Tensor& logits);

struct CrossEntropyResult {
  double meanLoss = 0.0;
  Tensor gradLogits;  // (probs - onehot) / N
};

/// Mean negative log-probability of the labelled class given row
/// probabilities, plus the gradient with respect to the pre-softmax logits.
CrossEntropyResult cross_entropy(const Tensor& probs, std::span<const std::int32_t> labels);

/// Same quantity computed from logits through a stable log-softmax.
CrossEntropyResult cross_entropy_from_logits(const Tensor& logits,
                                             std::span<const std::int32_t> labels);

std::vector<std::int32_t> argmax_rows(const Tensor& matrix);

/// y += alpha * x, elementwise; shapes and dtypes must match.
void axpy_inplace(Tensor& y, double alpha, const Tensor& x);

/// Counts multiply-accumulates executed by conv and dense kernels on this
/// thread while alive. Scopes nest; the innermost one receives the counts.
class ScopedMacTally {
 public:
  ScopedMacTally();
  ~ScopedMacTally();
  ScopedMacTally(const ScopedMacTally&) = delete;
  ScopedMacTally& operator=(const ScopedMacTally&) = delete;

  std::uint64_t macs() const { return macs_; }

 private:
  std::uint64_t macs_ = 0;
  ScopedMacTally* previous_ = nullptr;

  friend void tally_macs(std::uint64_t);
};

void tally_macs(std::uint64_t count);

}  // namespace seqcnn
