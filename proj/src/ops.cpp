#include "seqcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "gemm.hpp"

namespace seqcnn {

namespace {

thread_local ScopedMacTally* active_tally = nullptr;

// Upper bound on im2col buffer entries per call; samples are grouped under it.
constexpr std::size_t kColBudget = std::size_t{1} << 18;

std::string dim_error(const char* op, const char* dim, std::size_t got, std::size_t want) {
  return std::string(op) + ": " + dim + " is " + std::to_string(got) + ", expected " +
         std::to_string(want);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, inT, inF, outT, outF, k, j;
};

ConvGeometry conv_geometry(const Tensor& input, const ConvParams& p) {
  require_rank(input, 4, "conv2d");
  const auto& cfg = p.config;
  if (input.dim(1) != cfg.inChannels) {
    throw ShapeError(dim_error("conv2d", "input channel dimension", input.dim(1), cfg.inChannels));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.inT = input.dim(2);
  g.inF = input.dim(3);
  g.outT = window_extent(g.inT, cfg.kernelTime, cfg.padTime, cfg.strideTime, "time");
  g.outF = window_extent(g.inF, cfg.kernelFreq, cfg.padFreq, cfg.strideFreq, "frequency");
  g.k = cfg.inChannels * cfg.kernelTime * cfg.kernelFreq;
  g.j = g.outT * g.outF;
  return g;
}

// Output positions [lo, hi) whose input index o * stride + k - pad lies in [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k,
                                                std::size_t pad, std::size_t stride) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = (in + pad - k + stride - 1) / stride;
  hi = std::min(hi, out);
  return {std::min(lo, hi), hi};
}

template <Scalar T>
void im2col(const T* in, const ConvGeometry& g, const ConvConfig& cfg, T* col, std::size_t ld) {
  const std::size_t sf = cfg.strideFreq;
  for (std::size_t kf = 0; kf < cfg.kernelFreq; ++kf) {
    const auto [lo, hi] = valid_range(g.outF, g.inF, kf, cfg.padFreq, sf);
    for (std::size_t c = 0; c < g.c; ++c) {
      for (std::size_t kt = 0; kt < cfg.kernelTime; ++kt) {
        T* dst = col + ((c * cfg.kernelTime + kt) * cfg.kernelFreq + kf) * ld;
        for (std::size_t ot = 0; ot < g.outT; ++ot) {
          T* row = dst + ot * g.outF;
          const auto it = static_cast<std::ptrdiff_t>(ot * cfg.strideTime + kt) -
                          static_cast<std::ptrdiff_t>(cfg.padTime);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.inT)) {
            std::fill(row, row + g.outF, T(0));
            continue;
          }
          std::fill(row, row + lo, T(0));
          if (lo < hi) {
            const T* src = in + (c * g.inT + static_cast<std::size_t>(it)) * g.inF + lo * sf + kf - cfg.padFreq;
            for (std::size_t of = lo; of < hi; ++of) row[of] = src[(of - lo) * sf];
          }
          std::fill(row + hi, row + g.outF, T(0));
        }
      }
    }
  }
}

template <Scalar T>
void col2im_add(const T* col, std::size_t ld, const ConvGeometry& g, const ConvConfig& cfg,
                T* gradIn) {
  const std::size_t sf = cfg.strideFreq;
  for (std::size_t kf = 0; kf < cfg.kernelFreq; ++kf) {
    const auto [lo, hi] = valid_range(g.outF, g.inF, kf, cfg.padFreq, sf);
    for (std::size_t c = 0; c < g.c; ++c) {
      for (std::size_t kt = 0; kt < cfg.kernelTime; ++kt) {
        const T* src = col + ((c * cfg.kernelTime + kt) * cfg.kernelFreq + kf) * ld;
        for (std::size_t ot = 0; ot < g.outT; ++ot) {
          const auto it = static_cast<std::ptrdiff_t>(ot * cfg.strideTime + kt) -
                          static_cast<std::ptrdiff_t>(cfg.padTime);
          if (it < 0 || it >= static_cast<std::ptrdiff_t>(g.inT)) continue;
          if (lo == hi) continue;
          T* dst = gradIn + (c * g.inT + static_cast<std::size_t>(it)) * g.inF + lo * sf + kf - cfg.padFreq;
          const T* row = src + ot * g.outF;
          for (std::size_t of = lo; of < hi; ++of) dst[(of - lo) * sf] += row[of];
        }
      }
    }
  }
}

std::size_t group_size(const ConvGeometry& g) {
  const std::size_t per_sample = std::max<std::size_t>(1, g.k * g.j);
  return std::clamp<std::size_t>(kColBudget / per_sample, 1, g.n);
}

template <Scalar T>
Tensor conv_forward_impl(const Tensor& input, const ConvParams& p, const ConvGeometry& g) {
  const auto& cfg = p.config;
  const std::size_t outC = cfg.outChannels;
  Tensor out({g.n, outC, g.outT, g.outF}, input.dtype());
  const T* in = input.values<T>().data();
  const T* w = p.weights.values<T>().data();
  T* o = out.values<T>().data();
  const std::size_t group = group_size(g);
  std::vector<T> col(g.k * group * g.j);
  std::vector<T> tmp(group > 1 ? outC * group * g.j : 0);
  const std::size_t in_stride = g.c * g.inT * g.inF;
  const std::size_t out_stride = outC * g.j;

  for (std::size_t n0 = 0; n0 < g.n; n0 += group) {
    const std::size_t gn = std::min(group, g.n - n0);
    const std::size_t ld = gn * g.j;
    for (std::size_t s = 0; s < gn; ++s) {
      im2col(in + (n0 + s) * in_stride, g, cfg, col.data() + s * g.j, ld);
    }
    if (gn == 1) {
      detail::gemm_nn(outC, g.j, g.k, w, g.k, col.data(), ld, o + n0 * out_stride, g.j, false);
    } else {
      detail::gemm_nn(outC, ld, g.k, w, g.k, col.data(), ld, tmp.data(), ld, false);
      for (std::size_t s = 0; s < gn; ++s) {
        for (std::size_t oc = 0; oc < outC; ++oc) {
          std::copy_n(tmp.data() + oc * ld + s * g.j, g.j,
                      o + (n0 + s) * out_stride + oc * g.j);
        }
      }
    }
  }
  if (cfg.bias) {
    const T* b = p.bias.values<T>().data();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t oc = 0; oc < outC; ++oc) {
        T* row = o + n * out_stride + oc * g.j;
        for (std::size_t j = 0; j < g.j; ++j) row[j] += b[oc];
      }
    }
  }
  tally_macs(static_cast<std::uint64_t>(g.n) * outC * g.j * g.k);
  return out;
}

template <Scalar T>
ConvGrads conv_backward_impl(const Tensor& input, const ConvParams& p, const Tensor& gradOut,
                             const ConvGeometry& g) {
  const auto& cfg = p.config;
  const std::size_t outC = cfg.outChannels;
  ConvGrads grads{Tensor(input.shape(), input.dtype()), Tensor(p.weights.shape(), input.dtype()),
                  cfg.bias ? Tensor({outC}, input.dtype()) : Tensor()};
  const T* in = input.values<T>().data();
  const T* w = p.weights.values<T>().data();
  const T* go = gradOut.values<T>().data();
  T* gi = grads.input.values<T>().data();
  T* gw = grads.weights.values<T>().data();

  const std::size_t group = group_size(g);
  std::vector<T> col(g.k * group * g.j);
  std::vector<T> gcol(g.k * group * g.j);
  std::vector<T> gout(group > 1 ? outC * group * g.j : 0);
  const std::size_t in_stride = g.c * g.inT * g.inF;
  const std::size_t out_stride = outC * g.j;

  for (std::size_t n0 = 0; n0 < g.n; n0 += group) {
    const std::size_t gn = std::min(group, g.n - n0);
    const std::size_t ld = gn * g.j;
    for (std::size_t s = 0; s < gn; ++s) {
      im2col(in + (n0 + s) * in_stride, g, cfg, col.data() + s * g.j, ld);
    }
    const T* go_g = go + n0 * out_stride;
    if (gn > 1) {
      for (std::size_t s = 0; s < gn; ++s) {
        for (std::size_t oc = 0; oc < outC; ++oc) {
          std::copy_n(go + (n0 + s) * out_stride + oc * g.j, g.j,
                      gout.data() + oc * ld + s * g.j);
        }
      }
      go_g = gout.data();
    }
    detail::gemm_nt(outC, g.k, ld, go_g, ld, col.data(), ld, gw, g.k, true);
    detail::gemm_tn(g.k, ld, outC, w, g.k, go_g, ld, gcol.data(), ld, false);
    for (std::size_t s = 0; s < gn; ++s) {
      col2im_add(gcol.data() + s * g.j, ld, g, cfg, gi + (n0 + s) * in_stride);
    }
  }
  if (cfg.bias) {
    T* gb = grads.bias.values<T>().data();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t oc = 0; oc < outC; ++oc) {
        const T* row = go + n * out_stride + oc * g.j;
        T acc = 0;
        for (std::size_t j = 0; j < g.j; ++j) acc += row[j];
        gb[oc] += acc;
      }
    }
  }
  return grads;
}

}  // namespace

ConvParams ConvParams::zeros(const ConvConfig& config, DType dtype) {
  ConvParams p;
  p.config = config;
  p.weights = Tensor({config.outChannels, config.inChannels, config.kernelTime, config.kernelFreq},
                     dtype);
  if (config.bias) p.bias = Tensor({config.outChannels}, dtype);
  return p;
}

void ConvParams::validate() const {
  const auto& c = config;
  if (c.inChannels == 0 || c.outChannels == 0 || c.kernelTime == 0 || c.kernelFreq == 0 ||
      c.strideTime == 0 || c.strideFreq == 0) {
    throw ShapeError("conv2d: channel counts, kernel extents and strides must be positive");
  }
  require_shape(weights, {c.outChannels, c.inChannels, c.kernelTime, c.kernelFreq},
                "conv2d weights");
  if (c.bias) {
    require_shape(bias, {c.outChannels}, "conv2d bias");
    require_same_dtype(weights, bias, "conv2d bias");
  } else if (!bias.empty()) {
    throw ShapeError("conv2d: bias tensor given for a layer configured without bias");
  }
}

void PoolConfig::validate() const {
  if (kernelTime == 0 || kernelFreq == 0 || strideTime == 0 || strideFreq == 0) {
    throw ShapeError("maxpool2d: kernel extents and strides must be positive");
  }
  if (strideTime > kernelTime || strideFreq > kernelFreq) {
    throw ShapeError("maxpool2d: stride larger than kernel would skip input");
  }
}

DenseParams DenseParams::zeros(std::size_t inDim, std::size_t outDim, DType dtype) {
  DenseParams p;
  p.inDim = inDim;
  p.outDim = outDim;
  p.weights = Tensor({outDim, inDim}, dtype);
  p.bias = Tensor({outDim}, dtype);
  return p;
}

void DenseParams::validate() const {
  require_shape(weights, {outDim, inDim}, "dense weights");
  require_shape(bias, {outDim}, "dense bias");
  require_same_dtype(weights, bias, "dense bias");
}

std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t pad,
                          std::size_t stride, const char* dimension) {
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) {
    throw ShapeError(std::string(dimension) + " extent " + std::to_string(in) + " (padded " +
                     std::to_string(padded) + ") is smaller than kernel " +
                     std::to_string(kernel));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  params.validate();
  require_same_dtype(input, params.weights, "conv2d");
  const auto g = conv_geometry(input, params);
  return visit_dtype(input.dtype(),
                     [&]<class T>() { return conv_forward_impl<T>(input, params, g); });
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& gradOut) {
  params.validate();
  require_same_dtype(input, params.weights, "conv2d backward");
  require_same_dtype(input, gradOut, "conv2d backward");
  const auto g = conv_geometry(input, params);
  require_shape(gradOut, {g.n, params.config.outChannels, g.outT, g.outF}, "conv2d gradOut");
  return visit_dtype(input.dtype(),
                     [&]<class T>() { return conv_backward_impl<T>(input, params, gradOut, g); });
}

PoolResult maxpool2d_forward(const Tensor& input, const PoolConfig& config) {
  config.validate();
  require_rank(input, 4, "maxpool2d");
  const std::size_t n = input.dim(0), c = input.dim(1), inT = input.dim(2), inF = input.dim(3);
  if (config.kernelTime > inT || config.kernelFreq > inF) {
    throw ShapeError("maxpool2d: kernel " + std::to_string(config.kernelTime) + "x" +
                     std::to_string(config.kernelFreq) + " larger than input " +
                     std::to_string(inT) + "x" + std::to_string(inF));
  }
  const std::size_t outT = (inT - config.kernelTime) / config.strideTime + 1;
  const std::size_t outF = (inF - config.kernelFreq) / config.strideFreq + 1;
  PoolResult result{Tensor({n, c, outT, outF}, input.dtype()), {}};
  result.argmax.inputShape = input.shape();
  result.argmax.outputShape = result.output.shape();
  result.argmax.positions.resize(result.output.numel());

  visit_dtype(input.dtype(), [&]<class T>() {
    const T* in = input.values<T>().data();
    T* out = result.output.values<T>().data();
    auto& pos = result.argmax.positions;
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const std::size_t base = plane * inT * inF;
      for (std::size_t ot = 0; ot < outT; ++ot) {
        for (std::size_t of = 0; of < outF; ++of, ++o) {
          std::size_t best = base + ot * config.strideTime * inF + of * config.strideFreq;
          for (std::size_t kt = 0; kt < config.kernelTime; ++kt) {
            const std::size_t row = base + (ot * config.strideTime + kt) * inF;
            for (std::size_t kf = 0; kf < config.kernelFreq; ++kf) {
              const std::size_t idx = row + of * config.strideFreq + kf;
              if (in[idx] > in[best]) best = idx;
            }
          }
          out[o] = in[best];
          pos[o] = best;
        }
      }
    }
  });
  return result;
}

Tensor maxpool2d_backward(const PoolIndex& argmax, const Tensor& gradOut) {
  if (gradOut.shape() != argmax.outputShape ||
      argmax.positions.size() != shape_numel(argmax.outputShape) || argmax.inputShape.empty()) {
    throw ShapeError("maxpool2d backward: argmax index does not match gradOut shape " +
                     shape_string(gradOut.shape()));
  }
  Tensor gradIn(argmax.inputShape, gradOut.dtype());
  const std::size_t limit = gradIn.numel();
  visit_dtype(gradOut.dtype(), [&]<class T>() {
    const T* go = gradOut.values<T>().data();
    T* gi = gradIn.values<T>().data();
    for (std::size_t o = 0; o < argmax.positions.size(); ++o) {
      const std::size_t p = argmax.positions[o];
      if (p >= limit) throw ShapeError("maxpool2d backward: stale argmax position");
      gi[p] += go[o];
    }
  });
  return gradIn;
}

Tensor dense_forward(const Tensor& input, const DenseParams& params) {
  params.validate();
  require_rank(input, 2, "dense");
  require_same_dtype(input, params.weights, "dense");
  if (input.dim(1) != params.inDim) {
    throw ShapeError(dim_error("dense", "input dimension", input.dim(1), params.inDim));
  }
  const std::size_t n = input.dim(0);
  Tensor out({n, params.outDim}, input.dtype());
  visit_dtype(input.dtype(), [&]<class T>() {
    const T* x = input.values<T>().data();
    const T* w = params.weights.values<T>().data();
    const T* b = params.bias.values<T>().data();
    T* y = out.values<T>().data();
    detail::gemm_nt(n, params.outDim, params.inDim, x, params.inDim, w, params.inDim, y,
                    params.outDim, false);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < params.outDim; ++o) y[i * params.outDim + o] += b[o];
    }
  });
  tally_macs(static_cast<std::uint64_t>(n) * params.inDim * params.outDim);
  return out;
}

DenseGrads dense_backward(const Tensor& input, const DenseParams& params, const Tensor& gradOut) {
  params.validate();
  require_rank(input, 2, "dense backward");
  require_same_dtype(input, params.weights, "dense backward");
  require_same_dtype(input, gradOut, "dense backward");
  if (input.dim(1) != params.inDim) {
    throw ShapeError(dim_error("dense backward", "input dimension", input.dim(1), params.inDim));
  }
  const std::size_t n = input.dim(0);
  require_shape(gradOut, {n, params.outDim}, "dense gradOut");
  DenseGrads grads{Tensor(input.shape(), input.dtype()),
                   Tensor(params.weights.shape(), input.dtype()),
                   Tensor({params.outDim}, input.dtype())};
  visit_dtype(input.dtype(), [&]<class T>() {
    const T* x = input.values<T>().data();
    const T* w = params.weights.values<T>().data();
    const T* go = gradOut.values<T>().data();
    detail::gemm_tn(params.outDim, params.inDim, n, go, params.outDim, x, params.inDim,
                    grads.weights.values<T>().data(), params.inDim, false);
    detail::gemm_nn(n, params.inDim, params.outDim, go, params.outDim, w, params.inDim,
                    grads.input.values<T>().data(), params.inDim, false);
    T* gb = grads.bias.values<T>().data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < params.outDim; ++o) gb[o] += go[i * params.outDim + o];
    }
  });
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape(), input.dtype());
  visit_dtype(input.dtype(), [&]<class T>() {
    auto x = input.values<T>();
    auto y = out.values<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  });
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& gradOut) {
  require_shape(gradOut, input.shape(), "relu gradOut");
  require_same_dtype(input, gradOut, "relu backward");
  Tensor gradIn(input.shape(), input.dtype());
  visit_dtype(input.dtype(), [&]<class T>() {
    auto x = input.values<T>();
    auto go = gradOut.values<T>();
    auto gi = gradIn.values<T>();
    for (std::size_t i = 0; i < x.size(); ++i) gi[i] = x[i] > T(0) ? go[i] : T(0);
  });
  return gradIn;
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape(), logits.dtype());
  visit_dtype(logits.dtype(), [&]<class T>() {
    const T* z = logits.values<T>().data();
    T* p = out.values<T>().data();
    for (std::size_t i = 0; i < n; ++i) {
      const T* zi = z + i * k;
      T* pi = p + i * k;
      const T mx = *std::max_element(zi, zi + k);
      T sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        pi[j] = std::exp(zi[j] - mx);
        sum += pi[j];
      }
      for (std::size_t j = 0; j < k; ++j) pi[j] /= sum;
    }
  });
  return out;
}

namespace {

void check_labels(std::span<const std::int32_t> labels, std::size_t n, std::size_t k) {
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " outside [0," + std::to_string(k) + ")");
    }
  }
}

}  // namespace

CrossEntropyResult cross_entropy(const Tensor& probs, std::span<const std::int32_t> labels) {
  require_rank(probs, 2, "cross_entropy");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  check_labels(labels, n, k);
  CrossEntropyResult r{0.0, Tensor(probs.shape(), probs.dtype())};
  visit_dtype(probs.dtype(), [&]<class T>() {
    const T* p = probs.values<T>().data();
    T* g = r.gradLogits.values<T>().data();
    double loss = 0.0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t y = static_cast<std::size_t>(labels[i]);
      const double py = std::max<double>(p[i * k + y], std::numeric_limits<double>::min());
      loss -= std::log(py);
      for (std::size_t j = 0; j < k; ++j) {
        g[i * k + j] = (p[i * k + j] - (j == y ? T(1) : T(0))) * inv_n;
      }
    }
    r.meanLoss = loss / static_cast<double>(n);
  });
  return r;
}

CrossEntropyResult cross_entropy_from_logits(const Tensor& logits,
                                             std::span<const std::int32_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  check_labels(labels, n, k);
  CrossEntropyResult r{0.0, softmax_rows(logits)};
  visit_dtype(logits.dtype(), [&]<class T>() {
    const T* z = logits.values<T>().data();
    T* g = r.gradLogits.values<T>().data();
    double loss = 0.0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T* zi = z + i * k;
      const std::size_t y = static_cast<std::size_t>(labels[i]);
      const double mx = *std::max_element(zi, zi + k);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(zi[j]) - mx);
      loss += mx + std::log(sum) - static_cast<double>(zi[y]);
      for (std::size_t j = 0; j < k; ++j) {
        g[i * k + j] = (g[i * k + j] - (j == y ? T(1) : T(0))) * inv_n;
      }
    }
    r.meanLoss = loss / static_cast<double>(n);
  });
  return r;
}

std::vector<std::int32_t> argmax_rows(const Tensor& matrix) {
  require_rank(matrix, 2, "argmax_rows");
  const std::size_t n = matrix.dim(0), k = matrix.dim(1);
  std::vector<std::int32_t> out(n);
  visit_dtype(matrix.dtype(), [&]<class T>() {
    const T* m = matrix.values<T>().data();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = static_cast<std::int32_t>(std::max_element(m + i * k, m + (i + 1) * k) - (m + i * k));
    }
  });
  return out;
}

void axpy_inplace(Tensor& y, double alpha, const Tensor& x) {
  require_shape(x, y.shape(), "axpy");
  require_same_dtype(x, y, "axpy");
  visit_dtype(y.dtype(), [&]<class T>() {
    auto yv = y.values<T>();
    auto xv = x.values<T>();
    const T a = static_cast<T>(alpha);
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += a * xv[i];
  });
}

ScopedMacTally::ScopedMacTally() : previous_(active_tally) { active_tally = this; }

ScopedMacTally::~ScopedMacTally() { active_tally = previous_; }

void tally_macs(std::uint64_t count) {
  if (active_tally != nullptr) active_tally->macs_ += count;
}

}  // namespace seqcnn
