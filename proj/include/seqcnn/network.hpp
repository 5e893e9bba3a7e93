#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqcnn/arch.hpp"
#include "seqcnn/batchnorm.hpp"
#include "seqcnn/ops.hpp"

namespace seqcnn {

enum class ForwardMode {
  Train,             // batch statistics, running averages updated
  TrainFrozenStats,  // batch statistics, running averages untouched
  Infer,             // running statistics
};

/// A named trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

/// A named non-trainable tensor stored with the model (BN running stats).
struct BufferRef {
  std::string name;
  Tensor* value = nullptr;
};

/// Receives the statistics of every batch-norm layer during training
/// forwards: layer index, batch statistics, positions pooled per channel.
using BnObserver = std::function<void(std::size_t, const BatchStats&, std::size_t)>;

/// Runtime instance of an ArchitectureSpec.
///
/// Inputs are [N, 1, T, F]. The layers before the flatten run as a
/// convolution stack; the head is applied position-wise along time, the
/// first dense layer as a convolution spanning the head span and the whole
/// frequency axis, later ones as 1x1 convolutions. A window input
/// (T == windowLen) therefore yields one output frame per sample, a longer
/// input yields T - rfTime + 1 frames per sample.
///
/// Outputs are logit rows [N * T_out, numStates], sample-major.
class Network {
 public:
  Network(ArchitectureSpec spec, DType dtype);

  /// He-normal initialization from `seed`; biases zero, BN gamma one.
  static Network create(const ArchitectureSpec& spec, DType dtype, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  DType dtype() const { return dtype_; }

  std::vector<ParamRef> params();
  std::vector<BufferRef> buffers();
  std::vector<BatchNormState*> batch_norms();
  std::vector<const BatchNormState*> batch_norms() const;
  std::size_t num_parameters() const;

  void zero_grads();

  /// Forward pass that caches what `backward` needs.
  Tensor forward(const Tensor& input, ForwardMode mode);
  /// Accumulates parameter gradients for the last `forward`; returns the
  /// gradient with respect to the input.
  Tensor backward(const Tensor& gradLogits);

  /// Inference-mode logits without caching.
  Tensor predict_logits(const Tensor& input) const;
  /// Inference-mode row posteriors.
  Tensor predict(const Tensor& input) const;

  /// Per-layer inference outputs, index i holding the output of layer i
  /// in [N, C, T, F] form (head layers as [N, D, T_out, 1]).
  std::vector<Tensor> trace(const Tensor& input) const;

  /// Number of output frames per sample for an input of `inputTime` frames.
  std::size_t output_frames(std::size_t inputTime) const;

  void set_bn_observer(BnObserver observer) { bnObserver_ = std::move(observer); }

  Network cast(DType dtype) const;

  /// Copies parameters and BN state from `other` (same spec).
  void assign(const Network& other);

 private:
  struct Slot {
    LayerDescriptor desc;
    ConvParams conv;
    ConvParams convGrad;
    DenseParams dense;
    DenseParams denseGrad;
    BatchNormState bn;
    Tensor gammaGrad;
    Tensor betaGrad;
    bool headFirst = false;  // dense layer spanning the head window
  };

  struct Cache {
    ForwardMode mode = ForwardMode::Infer;
    std::vector<Tensor> inputs;
    std::vector<PoolIndex> pools;
    std::vector<BatchStats> bnStats;
    Shape outShape;
  };

  Tensor run(const Tensor& input, ForwardMode mode, Cache* cache, std::vector<Tensor>* trace) const;
  void check_input(const Tensor& input) const;

  ArchitectureSpec spec_;
  DType dtype_;
  std::size_t headSpan_ = 0;
  std::vector<Slot> slots_;
  Cache cache_;
  bool haveCache_ = false;
  BnObserver bnObserver_;
};

}  // namespace seqcnn
