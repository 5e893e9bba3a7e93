#include "seqcnn/network.hpp"

#include <cmath>

#include "seqcnn/rng.hpp"

namespace seqcnn {

namespace {

// [N, A, T, B] -> rows [N * T, A * B]
Tensor to_rows(const Tensor& x) {
  const std::size_t n = x.dim(0), a = x.dim(1), t = x.dim(2), b = x.dim(3);
  Tensor rows({n * t, a * b}, x.dtype());
  visit_dtype(x.dtype(), [&]<class T>() {
    const T* src = x.values<T>().data();
    T* dst = rows.values<T>().data();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < a; ++c)
        for (std::size_t f = 0; f < t; ++f)
          for (std::size_t k = 0; k < b; ++k)
            dst[((s * t + f) * a + c) * b + k] = src[((s * a + c) * t + f) * b + k];
  });
  return rows;
}

Tensor from_rows(const Tensor& rows, const Shape& shape) {
  const std::size_t n = shape[0], a = shape[1], t = shape[2], b = shape[3];
  require_shape(rows, {n * t, a * b}, "network output gradient");
  Tensor x(shape, rows.dtype());
  visit_dtype(rows.dtype(), [&]<class T>() {
    const T* src = rows.values<T>().data();
    T* dst = x.values<T>().data();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < a; ++c)
        for (std::size_t f = 0; f < t; ++f)
          for (std::size_t k = 0; k < b; ++k)
            dst[((s * a + c) * t + f) * b + k] = src[((s * t + f) * a + c) * b + k];
  });
  return x;
}

ConvParams head_params(const DenseParams& dense, std::size_t inChannels, std::size_t span,
                       std::size_t freq) {
  ConvParams p;
  p.config.inChannels = inChannels;
  p.config.outChannels = dense.outDim;
  p.config.kernelTime = span;
  p.config.kernelFreq = freq;
  p.config.bias = true;
  p.weights = dense.weights.reshaped({dense.outDim, inChannels, span, freq});
  p.bias = dense.bias;
  return p;
}

void copy_into(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("parameter shape " + shape_string(src.shape()) + " does not match " +
                     shape_string(dst.shape()));
  }
  dst = src.cast(dst.dtype());
}

}  // namespace

Network::Network(ArchitectureSpec spec, DType dtype) : spec_(std::move(spec)), dtype_(dtype) {
  validate_spec(spec_);
  const auto flatten = spec_.flatten_index();
  if (flatten) headSpan_ = infer_shapes(spec_, spec_.geometry.windowLen).headSpanTime;

  std::size_t channels = 1;
  bool seenDense = false;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    Slot slot;
    slot.desc = spec_.layers[i];
    if (const auto* c = std::get_if<ConvConfig>(&slot.desc)) {
      slot.conv = ConvParams::zeros(*c, dtype);
      slot.convGrad = ConvParams::zeros(*c, dtype);
      channels = c->outChannels;
    } else if (const auto* b = std::get_if<BatchNormSpec>(&slot.desc)) {
      slot.bn = BatchNormState::create(channels, dtype, b->epsilon, b->momentum);
      slot.gammaGrad = Tensor({channels}, dtype);
      slot.betaGrad = Tensor({channels}, dtype);
    } else if (const auto* d = std::get_if<DenseSpec>(&slot.desc)) {
      slot.dense = DenseParams::zeros(d->inDim, d->outDim, dtype);
      slot.denseGrad = DenseParams::zeros(d->inDim, d->outDim, dtype);
      slot.headFirst = !seenDense;
      seenDense = true;
    }
    slots_.push_back(std::move(slot));
  }
}

Network Network::create(const ArchitectureSpec& spec, DType dtype, std::uint64_t seed) {
  Network net(spec, dtype);
  Rng rng(seed);
  auto he_fill = [&](Tensor& w, std::size_t fanIn) {
    const double std = std::sqrt(2.0 / static_cast<double>(fanIn));
    for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, std * rng.normal());
  };
  for (auto& slot : net.slots_) {
    if (const auto* c = std::get_if<ConvConfig>(&slot.desc)) {
      he_fill(slot.conv.weights, c->inChannels * c->kernelTime * c->kernelFreq);
    } else if (const auto* d = std::get_if<DenseSpec>(&slot.desc)) {
      he_fill(slot.dense.weights, d->inDim);
    }
  }
  return net;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto& s = slots_[i];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    switch (kind_of(s.desc)) {
      case LayerKind::Conv:
        out.push_back({prefix + "weight", &s.conv.weights, &s.convGrad.weights});
        if (s.conv.config.bias) out.push_back({prefix + "bias", &s.conv.bias, &s.convGrad.bias});
        break;
      case LayerKind::Dense:
        out.push_back({prefix + "weight", &s.dense.weights, &s.denseGrad.weights});
        out.push_back({prefix + "bias", &s.dense.bias, &s.denseGrad.bias});
        break;
      case LayerKind::BatchNorm:
        out.push_back({prefix + "gamma", &s.bn.gamma, &s.gammaGrad});
        out.push_back({prefix + "beta", &s.bn.beta, &s.betaGrad});
        break;
      default:
        break;
    }
  }
  return out;
}

std::vector<BufferRef> Network::buffers() {
  std::vector<BufferRef> out;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (kind_of(slots_[i].desc) != LayerKind::BatchNorm) continue;
    const std::string prefix = "layer" + std::to_string(i) + ".";
    out.push_back({prefix + "running_mean", &slots_[i].bn.runningMean});
    out.push_back({prefix + "running_var", &slots_[i].bn.runningVar});
  }
  return out;
}

std::vector<BatchNormState*> Network::batch_norms() {
  std::vector<BatchNormState*> out;
  for (auto& s : slots_) {
    if (kind_of(s.desc) == LayerKind::BatchNorm) out.push_back(&s.bn);
  }
  return out;
}

std::vector<const BatchNormState*> Network::batch_norms() const {
  std::vector<const BatchNormState*> out;
  for (const auto& s : slots_) {
    if (kind_of(s.desc) == LayerKind::BatchNorm) out.push_back(&s.bn);
  }
  return out;
}

std::size_t Network::num_parameters() const {
  std::size_t n = 0;
  for (auto& p : const_cast<Network*>(this)->params()) n += p.value->numel();
  return n;
}

void Network::zero_grads() {
  for (auto& p : params()) p.grad->fill(0.0);
}

void Network::check_input(const Tensor& input) const {
  if (input.rank() != 4 || input.dim(1) != 1 || input.dim(3) != spec_.geometry.featDim) {
    throw ShapeError("network input must be [N, 1, T, " + std::to_string(spec_.geometry.featDim) +
                     "], got " + shape_string(input.shape()));
  }
  if (input.dtype() != dtype_) {
    throw ShapeError("network input is " + to_string(input.dtype()) + ", parameters are " +
                     to_string(dtype_));
  }
}

Tensor Network::run(const Tensor& input, ForwardMode mode, Cache* cache,
                    std::vector<Tensor>* trace) const {
  check_input(input);
  if (cache) {
    cache->mode = mode;
    cache->inputs.assign(slots_.size(), Tensor());
    cache->pools.assign(slots_.size(), PoolIndex());
    cache->bnStats.assign(slots_.size(), BatchStats());
  }
  Tensor x = input;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const Slot& s = slots_[i];
    if (cache) cache->inputs[i] = x;
    switch (kind_of(s.desc)) {
      case LayerKind::Conv:
        x = conv2d_forward(x, s.conv);
        break;
      case LayerKind::Pool: {
        auto r = maxpool2d_forward(x, std::get<PoolConfig>(s.desc));
        if (cache) cache->pools[i] = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::BatchNorm:
        if (mode == ForwardMode::Infer) {
          x = bn_forward_infer(x, s.bn);
        } else {
          auto r = bn_forward_batch(x, s.bn);
          if (bnObserver_) bnObserver_(i, r.stats, x.dim(0) * x.dim(2) * x.dim(3));
          if (cache) cache->bnStats[i] = std::move(r.stats);
          x = std::move(r.output);
        }
        break;
      case LayerKind::Activation:
        x = relu(x);
        break;
      case LayerKind::Flatten:
        if (x.dim(2) < headSpan_) {
          throw ShapeError("layer " + std::to_string(i) + " (flatten): time extent " +
                           std::to_string(x.dim(2)) + " shorter than head span " +
                           std::to_string(headSpan_));
        }
        break;
      case LayerKind::Dense:
        if (s.headFirst) {
          x = conv2d_forward(x, head_params(s.dense, x.dim(1), headSpan_, x.dim(3)));
        } else {
          x = conv2d_forward(x, head_params(s.dense, x.dim(1), 1, 1));
        }
        break;
      case LayerKind::Softmax:
        break;
    }
    if (trace) trace->push_back(x);
  }
  if (cache) cache->outShape = x.shape();
  return to_rows(x);
}

Tensor Network::forward(const Tensor& input, ForwardMode mode) {
  Tensor out = run(input, mode, &cache_, nullptr);
  haveCache_ = true;
  if (mode == ForwardMode::Train) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (kind_of(slots_[i].desc) == LayerKind::BatchNorm) bn_update_running(slots_[i].bn, cache_.bnStats[i]);
    }
  }
  return out;
}

Tensor Network::backward(const Tensor& gradLogits) {
  if (!haveCache_) throw std::logic_error("Network::backward called without a cached forward");
  if (cache_.mode == ForwardMode::Infer) {
    throw std::logic_error("Network::backward needs a training-mode forward");
  }
  require_same_dtype(gradLogits, cache_.inputs.front(), "network backward");

  Tensor g = from_rows(gradLogits, cache_.outShape);

  for (std::size_t ii = slots_.size(); ii-- > 0;) {
    Slot& s = slots_[ii];
    const Tensor& in = cache_.inputs[ii];
    switch (kind_of(s.desc)) {
      case LayerKind::Conv: {
        auto r = conv2d_backward(in, s.conv, g);
        axpy_inplace(s.convGrad.weights, 1.0, r.weights);
        if (s.conv.config.bias) axpy_inplace(s.convGrad.bias, 1.0, r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::Pool:
        g = maxpool2d_backward(cache_.pools[ii], g);
        break;
      case LayerKind::BatchNorm: {
        auto r = bn_backward(in, s.bn, cache_.bnStats[ii], g);
        axpy_inplace(s.gammaGrad, 1.0, r.gamma);
        axpy_inplace(s.betaGrad, 1.0, r.beta);
        g = std::move(r.input);
        break;
      }
      case LayerKind::Activation:
        g = relu_backward(in, g);
        break;
      case LayerKind::Dense: {
        const ConvParams hp = s.headFirst ? head_params(s.dense, in.dim(1), headSpan_, in.dim(3))
                                          : head_params(s.dense, in.dim(1), 1, 1);
        auto r = conv2d_backward(in, hp, g);
        axpy_inplace(s.denseGrad.weights, 1.0, r.weights.reshaped(s.denseGrad.weights.shape()));
        axpy_inplace(s.denseGrad.bias, 1.0, r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Softmax:
        break;
    }
  }
  return g;
}

Tensor Network::predict_logits(const Tensor& input) const {
  return run(input, ForwardMode::Infer, nullptr, nullptr);
}

Tensor Network::predict(const Tensor& input) const { return softmax_rows(predict_logits(input)); }

std::vector<Tensor> Network::trace(const Tensor& input) const {
  std::vector<Tensor> out;
  run(input, ForwardMode::Infer, nullptr, &out);
  return out;
}

std::size_t Network::output_frames(std::size_t inputTime) const {
  const auto report = infer_shapes(spec_, inputTime);
  return spec_.flatten_index() ? report.outputTime() : report.convOutTime;
}

Network Network::cast(DType dtype) const {
  Network out(spec_, dtype);
  out.assign(*this);
  return out;
}

void Network::assign(const Network& other) {
  if (!(other.spec_ == spec_)) throw std::invalid_argument("Network::assign: architecture mismatch");
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    Slot& d = slots_[i];
    const Slot& s = other.slots_[i];
    switch (kind_of(d.desc)) {
      case LayerKind::Conv:
        copy_into(d.conv.weights, s.conv.weights);
        if (d.conv.config.bias) copy_into(d.conv.bias, s.conv.bias);
        break;
      case LayerKind::Dense:
        copy_into(d.dense.weights, s.dense.weights);
        copy_into(d.dense.bias, s.dense.bias);
        break;
      case LayerKind::BatchNorm:
        copy_into(d.bn.gamma, s.bn.gamma);
        copy_into(d.bn.beta, s.bn.beta);
        copy_into(d.bn.runningMean, s.bn.runningMean);
        copy_into(d.bn.runningVar, s.bn.runningVar);
        d.bn.updateCount = s.bn.updateCount;
        break;
      default:
        break;
    }
  }
}

}  // namespace seqcnn
