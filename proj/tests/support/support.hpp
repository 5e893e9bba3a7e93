#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "seqcnn/arch.hpp"
#include "seqcnn/batchnorm.hpp"
#include "seqcnn/gradcheck.hpp"
#include "seqcnn/ops.hpp"
#include "seqcnn/rng.hpp"
#include "seqcnn/seqeval.hpp"

namespace seqcnn::test {

inline Tensor random_tensor(const Shape& shape, Rng& rng, DType dtype = DType::F64, double scale = 1.0) {
  Tensor t(shape, DType::F64);
  for (auto& v : t.values<double>()) v = scale * rng.normal();
  return dtype == DType::F64 ? t : t.cast(dtype);
}

inline Utterance random_utterance(std::size_t frames, std::size_t featDim, Rng& rng,
                                  std::size_t numStates = 0, const std::string& id = "u") {
  Utterance u;
  u.id = id;
  u.features = random_tensor({frames, featDim}, rng, DType::F32);
  if (numStates) {
    u.labels.resize(frames);
    for (auto& l : u.labels) l = static_cast<std::int32_t>(rng.below(numStates));
  }
  return u;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector();
  const auto y = b.to_vector();
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
    path_ = std::filesystem::temp_directory_path() / ("seqcnn-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Small random architecture: 1-3 conv layers (optionally with time
/// padding or batch norm), optional frequency/time pooling, dense head.
inline ArchitectureSpec random_spec(Rng& rng, bool allowBatchNorm = true, bool streamable = false) {
  ArchitectureSpec spec;
  spec.name = "random";
  const std::size_t ctx = 2 + rng.below(3);
  spec.geometry.contextRadius = ctx;
  spec.geometry.windowLen = 2 * ctx + 1;
  spec.geometry.featDim = 6 + rng.below(7);
  spec.geometry.numStates = 3 + rng.below(4);
  std::size_t t = spec.geometry.windowLen;
  std::size_t f = spec.geometry.featDim;
  std::size_t c = 1;
  const std::size_t convs = 1 + rng.below(3);
  for (std::size_t i = 0; i < convs; ++i) {
    ConvConfig conv;
    conv.inChannels = c;
    conv.outChannels = 2 + rng.below(4);
    conv.kernelTime = t >= 3 ? 1 + 2 * rng.below(2) : 1;
    conv.kernelFreq = f >= 3 ? 1 + 2 * rng.below(2) : 1;
    conv.padFreq = conv.kernelFreq / 2;
    if (!streamable && rng.below(3) == 0) conv.padTime = conv.kernelTime / 2;
    const bool bn = allowBatchNorm && rng.below(2) == 0;
    conv.bias = !bn;
    spec.layers.emplace_back(conv);
    t = t + 2 * conv.padTime - conv.kernelTime + 1;
    f = f + 2 * conv.padFreq - conv.kernelFreq + 1;
    c = conv.outChannels;
    if (bn) spec.layers.emplace_back(BatchNormSpec{});
    spec.layers.emplace_back(ActivationSpec{});
    if (f >= 4 && rng.below(2) == 0) {
      PoolConfig pool;
      if (!streamable && t >= 4 && rng.below(3) == 0) {
        pool.kernelTime = 2;
        pool.strideTime = 2;
        t /= 2;
      }
      spec.layers.emplace_back(pool);
      f /= 2;
    }
  }
  spec.layers.emplace_back(FlattenSpec{});
  const std::size_t hidden = 3 + rng.below(6);
  std::size_t in = c * f * t;
  if (rng.below(2) == 0) {
    spec.layers.emplace_back(DenseSpec{in, hidden});
    spec.layers.emplace_back(ActivationSpec{});
    in = hidden;
  }
  spec.layers.emplace_back(DenseSpec{in, spec.geometry.numStates});
  spec.layers.emplace_back(SoftmaxSpec{});
  return spec;
}

// Scalar losses over single layers: L = sum(w * layer(x)) with fixed
// random weights w, differentiable in the input and every parameter.

class WeightedSum {
 public:
  WeightedSum() = default;
  explicit WeightedSum(const Tensor& output, Rng& rng) : w_(random_tensor(output.shape(), rng)) {}
  double value(const Tensor& y) const {
    const auto a = y.values<double>();
    const auto b = w_.values<double>();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  const Tensor& weights() const { return w_; }

 private:
  Tensor w_;
};

class ConvLoss : public Differentiable {
 public:
  ConvLoss(const ConvConfig& cfg, const Shape& inputShape, Rng& rng) {
    params_ = ConvParams::zeros(cfg, DType::F64);
    params_.weights = random_tensor(params_.weights.shape(), rng, DType::F64, 0.5);
    if (cfg.bias) params_.bias = random_tensor(params_.bias.shape(), rng);
    x_ = random_tensor(inputShape, rng);
    sum_ = WeightedSum(conv2d_forward(x_, params_), rng);
    gx_ = Tensor(x_.shape(), DType::F64);
    gw_ = Tensor(params_.weights.shape(), DType::F64);
    if (cfg.bias) gb_ = Tensor(params_.bias.shape(), DType::F64);
  }
  double loss() override { return sum_.value(conv2d_forward(x_, params_)); }
  void compute_gradients() override {
    const ConvGrads g = conv2d_backward(x_, params_, sum_.weights());
    gx_ = g.input;
    gw_ = g.weights;
    if (params_.config.bias) gb_ = g.bias;
  }
  std::vector<ParamRef> parameters() override {
    std::vector<ParamRef> p{{"input", &x_, &gx_}, {"weight", &params_.weights, &gw_}};
    if (params_.config.bias) p.push_back({"bias", &params_.bias, &gb_});
    return p;
  }

 private:
  ConvParams params_;
  Tensor x_, gx_, gw_, gb_;
  WeightedSum sum_;
};

class PoolLoss : public Differentiable {
 public:
  PoolLoss(const PoolConfig& cfg, const Shape& inputShape, Rng& rng) : cfg_(cfg) {
    x_ = random_tensor(inputShape, rng);
    sum_ = WeightedSum(maxpool2d_forward(x_, cfg_).output, rng);
    gx_ = Tensor(x_.shape(), DType::F64);
  }
  double loss() override { return sum_.value(maxpool2d_forward(x_, cfg_).output); }
  void compute_gradients() override {
    gx_ = maxpool2d_backward(maxpool2d_forward(x_, cfg_).argmax, sum_.weights());
  }
  std::vector<ParamRef> parameters() override { return {{"input", &x_, &gx_}}; }

 private:
  PoolConfig cfg_;
  Tensor x_, gx_;
  WeightedSum sum_;
};

class DenseLoss : public Differentiable {
 public:
  DenseLoss(std::size_t rows, std::size_t in, std::size_t out, Rng& rng) {
    params_ = DenseParams::zeros(in, out, DType::F64);
    params_.weights = random_tensor(params_.weights.shape(), rng, DType::F64, 0.5);
    params_.bias = random_tensor(params_.bias.shape(), rng);
    x_ = random_tensor({rows, in}, rng);
    sum_ = WeightedSum(dense_forward(x_, params_), rng);
    gx_ = Tensor(x_.shape(), DType::F64);
    gw_ = Tensor(params_.weights.shape(), DType::F64);
    gb_ = Tensor(params_.bias.shape(), DType::F64);
  }
  double loss() override { return sum_.value(dense_forward(x_, params_)); }
  void compute_gradients() override {
    const DenseGrads g = dense_backward(x_, params_, sum_.weights());
    gx_ = g.input;
    gw_ = g.weights;
    gb_ = g.bias;
  }
  std::vector<ParamRef> parameters() override {
    return {{"input", &x_, &gx_}, {"weight", &params_.weights, &gw_}, {"bias", &params_.bias, &gb_}};
  }

 private:
  DenseParams params_;
  Tensor x_, gx_, gw_, gb_;
  WeightedSum sum_;
};

class BatchNormLoss : public Differentiable {
 public:
  BatchNormLoss(const Shape& inputShape, Rng& rng) {
    state_ = BatchNormState::create(inputShape[1], DType::F64);
    state_.gamma = random_tensor({inputShape[1]}, rng, DType::F64, 0.5);
    for (auto& g : state_.gamma.values<double>()) g += 1.0;
    state_.beta = random_tensor({inputShape[1]}, rng);
    x_ = random_tensor(inputShape, rng, DType::F64, 2.0);
    sum_ = WeightedSum(bn_forward_batch(x_, state_).output, rng);
    gx_ = Tensor(x_.shape(), DType::F64);
    gg_ = Tensor(state_.gamma.shape(), DType::F64);
    gb_ = Tensor(state_.beta.shape(), DType::F64);
  }
  double loss() override { return sum_.value(bn_forward_batch(x_, state_).output); }
  void compute_gradients() override {
    const BnTrainResult fwd = bn_forward_batch(x_, state_);
    const BnGrads g = bn_backward(x_, state_, fwd.stats, sum_.weights());
    gx_ = g.input;
    gg_ = g.gamma;
    gb_ = g.beta;
  }
  std::vector<ParamRef> parameters() override {
    return {{"input", &x_, &gx_}, {"gamma", &state_.gamma, &gg_}, {"beta", &state_.beta, &gb_}};
  }

 private:
  BatchNormState state_;
  Tensor x_, gx_, gg_, gb_;
  WeightedSum sum_;
};

class SoftmaxCrossEntropyLoss : public Differentiable {
 public:
  SoftmaxCrossEntropyLoss(std::size_t rows, std::size_t classes, Rng& rng) {
    logits_ = random_tensor({rows, classes}, rng, DType::F64, 2.0);
    labels_.resize(rows);
    for (auto& l : labels_) l = static_cast<std::int32_t>(rng.below(classes));
    grad_ = Tensor(logits_.shape(), DType::F64);
  }
  double loss() override { return cross_entropy(softmax_rows(logits_), labels_).meanLoss; }
  void compute_gradients() override { grad_ = cross_entropy(softmax_rows(logits_), labels_).gradLogits; }
  std::vector<ParamRef> parameters() override { return {{"logits", &logits_, &grad_}}; }

 private:
  Tensor logits_, grad_;
  std::vector<std::int32_t> labels_;
};

}  // namespace seqcnn::test
