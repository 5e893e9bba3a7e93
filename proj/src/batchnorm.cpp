#include "seqcnn/batchnorm.hpp"

#include <cmath>
#include <string>

namespace seqcnn {

namespace {

struct Layout {
  std::size_t n, c, inner;
};

Layout bn_layout(const Tensor& x, std::size_t channels) {
  if (x.rank() != 4) {
    throw ShapeError("batchnorm: expected [N,C,T,F] input, got " + shape_string(x.shape()));
  }
  if (x.dim(1) != channels) {
    throw ShapeError("batchnorm: input has " + std::to_string(x.dim(1)) + " channels, state has " +
                     std::to_string(channels));
  }
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
}

}  // namespace

BatchNormState BatchNormState::create(std::size_t channels, DType dtype, double epsilon,
                                      double momentum) {
  BatchNormState s;
  s.channels = channels;
  s.gamma = Tensor::filled({channels}, 1.0, dtype);
  s.beta = Tensor({channels}, dtype);
  s.runningMean = Tensor({channels}, dtype);
  s.runningVar = Tensor::filled({channels}, 1.0, dtype);
  s.epsilon = epsilon;
  s.momentum = momentum;
  s.validate();
  return s;
}

void BatchNormState::validate() const {
  if (channels == 0) throw ShapeError("batchnorm: zero channels");
  for (const Tensor* t : {&gamma, &beta, &runningMean, &runningVar}) {
    require_shape(*t, {channels}, "batchnorm state");
    require_same_dtype(*t, gamma, "batchnorm state");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("batchnorm: epsilon must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("batchnorm: momentum must lie in (0,1)");
  }
  for (std::size_t c = 0; c < channels; ++c) {
    if (runningVar.get(c) < 0.0) throw std::invalid_argument("batchnorm: negative running variance");
  }
}

BatchStats bn_batch_stats(const Tensor& x) {
  const Layout l = bn_layout(x, x.rank() == 4 ? x.dim(1) : 0);
  const std::size_t count = l.n * l.inner;
  if (count < 2) {
    throw ShapeError("batchnorm: need at least 2 positions per channel, got " +
                     std::to_string(count));
  }
  BatchStats stats{Tensor({l.c}, x.dtype()), Tensor({l.c}, x.dtype())};
  visit_dtype(x.dtype(), [&]<class T>() {
    const T* xv = x.values<T>().data();
    for (std::size_t c = 0; c < l.c; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < l.n; ++n) {
        const T* p = xv + (n * l.c + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) sum += p[i];
      }
      const double mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < l.n; ++n) {
        const T* p = xv + (n * l.c + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) {
          const double d = p[i] - mean;
          sq += d * d;
        }
      }
      stats.mean.set(c, mean);
      stats.var.set(c, sq / static_cast<double>(count));
    }
  });
  return stats;
}

namespace {

template <Scalar T>
Tensor normalize_affine(const Tensor& x, const Layout& l, const Tensor& mean, const Tensor& var,
                        const BatchNormState& state) {
  Tensor y(x.shape(), x.dtype());
  const T* xv = x.values<T>().data();
  T* yv = y.values<T>().data();
  for (std::size_t c = 0; c < l.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(var.get(c) + state.epsilon);
    const T scale = static_cast<T>(state.gamma.get(c) * inv_std);
    const T shift = static_cast<T>(state.beta.get(c) - state.gamma.get(c) * mean.get(c) * inv_std);
    for (std::size_t n = 0; n < l.n; ++n) {
      const std::size_t off = (n * l.c + c) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) yv[off + i] = scale * xv[off + i] + shift;
    }
  }
  return y;
}

}  // namespace

BnTrainResult bn_forward_batch(const Tensor& x, const BatchNormState& state) {
  const Layout l = bn_layout(x, state.channels);
  require_same_dtype(x, state.gamma, "batchnorm");
  BnTrainResult r{Tensor(), bn_batch_stats(x)};
  r.output = visit_dtype(x.dtype(), [&]<class T>() {
    return normalize_affine<T>(x, l, r.stats.mean, r.stats.var, state);
  });
  return r;
}

void bn_update_running(BatchNormState& state, const BatchStats& stats) {
  require_shape(stats.mean, {state.channels}, "batchnorm running update");
  require_shape(stats.var, {state.channels}, "batchnorm running update");
  const bool first = state.updateCount == 0;
  for (std::size_t c = 0; c < state.channels; ++c) {
    const double m = stats.mean.get(c);
    const double v = stats.var.get(c);
    if (first) {
      state.runningMean.set(c, m);
      state.runningVar.set(c, v);
    } else {
      state.runningMean.set(c, state.momentum * state.runningMean.get(c) + (1.0 - state.momentum) * m);
      state.runningVar.set(c, state.momentum * state.runningVar.get(c) + (1.0 - state.momentum) * v);
    }
  }
  ++state.updateCount;
}

BnTrainResult bn_forward_train(const Tensor& x, BatchNormState& state, bool updateRunning) {
  BnTrainResult r = bn_forward_batch(x, state);
  if (updateRunning) bn_update_running(state, r.stats);
  return r;
}

Tensor bn_forward_infer(const Tensor& x, const BatchNormState& state) {
  const Layout l = bn_layout(x, state.channels);
  require_same_dtype(x, state.gamma, "batchnorm");
  return visit_dtype(x.dtype(), [&]<class T>() {
    return normalize_affine<T>(x, l, state.runningMean, state.runningVar, state);
  });
}

BnGrads bn_backward(const Tensor& x, const BatchNormState& state, const BatchStats& stats,
                    const Tensor& gradOut) {
  const Layout l = bn_layout(x, state.channels);
  require_shape(gradOut, x.shape(), "batchnorm gradOut");
  require_same_dtype(x, gradOut, "batchnorm backward");
  if (stats.mean.shape() != Shape{l.c} || stats.var.shape() != Shape{l.c}) {
    throw ShapeError("batchnorm backward: statistics do not match channel count");
  }
  BnGrads g{Tensor(x.shape(), x.dtype()), Tensor({l.c}, x.dtype()), Tensor({l.c}, x.dtype())};
  const double count = static_cast<double>(l.n * l.inner);
  visit_dtype(x.dtype(), [&]<class T>() {
    const T* xv = x.values<T>().data();
    const T* go = gradOut.values<T>().data();
    T* gi = g.input.values<T>().data();
    for (std::size_t c = 0; c < l.c; ++c) {
      const double mean = stats.mean.get(c);
      const double inv_std = 1.0 / std::sqrt(stats.var.get(c) + state.epsilon);
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t n = 0; n < l.n; ++n) {
        const std::size_t off = (n * l.c + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) {
          sum_g += go[off + i];
          sum_gx += go[off + i] * (xv[off + i] - mean) * inv_std;
        }
      }
      g.beta.set(c, sum_g);
      g.gamma.set(c, sum_gx);
      const double scale = state.gamma.get(c) * inv_std;
      const double mean_g = sum_g / count;
      const double mean_gx = sum_gx / count;
      for (std::size_t n = 0; n < l.n; ++n) {
        const std::size_t off = (n * l.c + c) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) {
          const double xhat = (xv[off + i] - mean) * inv_std;
          gi[off + i] = static_cast<T>(scale * (go[off + i] - mean_g - xhat * mean_gx));
        }
      }
    }
  });
  return g;
}

ChannelStats sequence_batch_stats(std::span<const Tensor> utterances, std::size_t channel) {
  if (utterances.empty()) throw std::invalid_argument("sequence_batch_stats: empty batch");
  ChannelStats s;
  double sum = 0.0;
  for (const Tensor& u : utterances) {
    if (u.rank() != 3 || channel >= u.dim(0)) {
      throw ShapeError("sequence_batch_stats: expected [C,T,F] maps with channel " +
                       std::to_string(channel) + ", got " + shape_string(u.shape()));
    }
    const std::size_t inner = u.dim(1) * u.dim(2);
    for (std::size_t i = 0; i < inner; ++i) sum += u.get(channel * inner + i);
    s.count += inner;
  }
  if (s.count < 2) throw ShapeError("sequence_batch_stats: fewer than 2 positions");
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (const Tensor& u : utterances) {
    const std::size_t inner = u.dim(1) * u.dim(2);
    for (std::size_t i = 0; i < inner; ++i) {
      const double d = u.get(channel * inner + i) - s.mean;
      sq += d * d;
    }
  }
  s.var = sq / static_cast<double>(s.count);
  return s;
}

}  // namespace seqcnn
