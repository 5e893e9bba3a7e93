#include "seqcnn/seqeval.hpp"

#include <algorithm>
#include <cmath>

namespace seqcnn {

namespace {

std::size_t left_context(const Network& net) { return net.spec().geometry.contextRadius; }
std::size_t right_context(const Network& net) { return net.spec().geometry.rightContext(); }

void require_frames(const Network& net, const Utterance& utt) {
  if (utt.features.rank() != 2 || utt.frames() < 1) {
    throw ShapeError("utterance '" + utt.id + "': features must be [T >= 1, F], got " +
                     shape_string(utt.features.shape()));
  }
  if (utt.features.dim(1) != net.spec().geometry.featDim) {
    throw ShapeError("utterance '" + utt.id + "': feature dimension " +
                     std::to_string(utt.features.dim(1)) + ", network expects " +
                     std::to_string(net.spec().geometry.featDim));
  }
}

// Copies rows [lo, lo + count) of the replicated-edge utterance into `dst`.
template <Scalar T>
void copy_replicated(const Tensor& features, std::ptrdiff_t lo, std::size_t count, T* dst) {
  const std::size_t frames = features.dim(0);
  const std::size_t f = features.dim(1);
  visit_dtype(features.dtype(), [&]<class S>() {
    const S* src = features.values<S>().data();
    for (std::size_t i = 0; i < count; ++i) {
      const std::ptrdiff_t t = std::clamp<std::ptrdiff_t>(lo + static_cast<std::ptrdiff_t>(i), 0,
                                                          static_cast<std::ptrdiff_t>(frames) - 1);
      const S* row = src + static_cast<std::size_t>(t) * f;
      for (std::size_t k = 0; k < f; ++k) dst[i * f + k] = static_cast<T>(row[k]);
    }
  });
}

Tensor padded_input(const Network& net, const Utterance& utt) {
  const std::size_t l = left_context(net), r = right_context(net);
  const std::size_t t = utt.frames(), f = utt.features.dim(1);
  Tensor in({1, 1, l + t + r, f}, net.dtype());
  visit_dtype(net.dtype(), [&]<class T>() {
    copy_replicated<T>(utt.features, -static_cast<std::ptrdiff_t>(l), l + t + r, in.values<T>().data());
  });
  return in;
}

}  // namespace

void Utterance::validate(std::size_t featDim, std::size_t numStates) const {
  if (features.rank() != 2 || features.dim(0) < 1) {
    throw ShapeError("utterance '" + id + "': features must be [T >= 1, F], got " +
                     shape_string(features.shape()));
  }
  if (featDim != 0 && features.dim(1) != featDim) {
    throw ShapeError("utterance '" + id + "': feature dimension " + std::to_string(features.dim(1)) +
                     ", expected " + std::to_string(featDim));
  }
  if (!labels.empty()) {
    if (labels.size() != features.dim(0)) {
      throw ShapeError("utterance '" + id + "': " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(features.dim(0)) + " frames");
    }
    if (numStates != 0) {
      for (std::size_t t = 0; t < labels.size(); ++t) {
        if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= numStates) {
          throw std::out_of_range("utterance '" + id + "': label " + std::to_string(labels[t]) +
                                  " at frame " + std::to_string(t) + " outside [0, " +
                                  std::to_string(numStates) + ")");
        }
      }
    }
  }
}

Tensor pad_utterance(const Tensor& features, std::size_t left, std::size_t right) {
  if (features.rank() != 2) throw ShapeError("pad_utterance: expected [T, F], got " + shape_string(features.shape()));
  const std::size_t t = features.dim(0), f = features.dim(1);
  Tensor out({left + t + right, f}, features.dtype());
  visit_dtype(features.dtype(), [&]<class T>() {
    copy_replicated<T>(features, -static_cast<std::ptrdiff_t>(left), left + t + right, out.values<T>().data());
  });
  return out;
}

Tensor extract_window(const Tensor& features, std::size_t center, std::size_t left, std::size_t right) {
  if (features.rank() != 2) throw ShapeError("extract_window: expected [T, F], got " + shape_string(features.shape()));
  if (center >= features.dim(0)) {
    throw std::out_of_range("extract_window: centre frame " + std::to_string(center) + " beyond " +
                            std::to_string(features.dim(0)) + " frames");
  }
  Tensor out({left + 1 + right, features.dim(1)}, features.dtype());
  visit_dtype(features.dtype(), [&]<class T>() {
    copy_replicated<T>(features, static_cast<std::ptrdiff_t>(center) - static_cast<std::ptrdiff_t>(left),
                       left + 1 + right, out.values<T>().data());
  });
  return out;
}

PosteriorMatrix evaluate_spliced(const Network& net, const Utterance& utt, EvalStats* stats,
                                 std::size_t windowsPerPass) {
  require_frames(net, utt);
  const auto& g = net.spec().geometry;
  const std::size_t l = left_context(net);
  const std::size_t w = g.windowLen, f = g.featDim, t = utt.frames();
  if (net.output_frames(w) != 1) {
    throw ShapeError("evaluate_spliced: a window of " + std::to_string(w) + " frames yields " +
                     std::to_string(net.output_frames(w)) + " output frames, expected 1");
  }
  windowsPerPass = std::max<std::size_t>(1, windowsPerPass);
  PosteriorMatrix out{Tensor({t, g.numStates}, net.dtype())};
  for (std::size_t begin = 0; begin < t; begin += windowsPerPass) {
    const std::size_t n = std::min(windowsPerPass, t - begin);
    Tensor batch({n, 1, w, f}, net.dtype());
    visit_dtype(net.dtype(), [&]<class T>() {
      T* dst = batch.values<T>().data();
      for (std::size_t i = 0; i < n; ++i) {
        copy_replicated<T>(utt.features,
                           static_cast<std::ptrdiff_t>(begin + i) - static_cast<std::ptrdiff_t>(l), w,
                           dst + i * w * f);
      }
    });
    const Tensor probs = net.predict(batch);
    visit_dtype(net.dtype(), [&]<class T>() {
      std::copy(probs.values<T>().begin(), probs.values<T>().end(),
                out.values.values<T>().begin() + static_cast<std::ptrdiff_t>(begin * g.numStates));
    });
    if (stats) {
      stats->inputFrames += n * w;
      stats->passes += 1;
      stats->outputFrames += n;
    }
  }
  return out;
}

PosteriorMatrix evaluate_convolutional(const Network& net, const Utterance& utt, EvalStats* stats) {
  if (const auto issue = streamability_issue(net.spec())) {
    throw NotStreamableError("not streamable: " + *issue);
  }
  require_frames(net, utt);
  PosteriorMatrix out{net.predict(padded_input(net, utt))};
  if (out.frames() != utt.frames()) {
    throw ShapeError("evaluate_convolutional: produced " + std::to_string(out.frames()) +
                     " rows for " + std::to_string(utt.frames()) + " frames");
  }
  if (stats) {
    stats->inputFrames += utt.frames() + net.spec().geometry.windowLen - 1;
    stats->passes += 1;
    stats->outputFrames += out.frames();
  }
  return out;
}

EquivalenceReport check_equivalence(const Network& net, const Utterance& utt, double tolerance,
                                    DType compute) {
  const Network local = net.cast(compute);
  Utterance u{utt.id, utt.features.cast(compute), {}};
  const auto spliced = evaluate_spliced(local, u);
  const auto conv = evaluate_convolutional(local, u);
  EquivalenceReport r;
  r.tolerance = tolerance;
  r.framesCompared = spliced.frames();
  const std::size_t n = spliced.values.numel();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(spliced.values.get(i) - conv.values.get(i));
    r.maxAbsDiff = std::max(r.maxAbsDiff, std::isnan(d) ? INFINITY : d);
    sum += d;
  }
  r.meanAbsDiff = n ? sum / static_cast<double>(n) : 0.0;
  r.pass = r.maxAbsDiff <= tolerance;
  return r;
}

std::size_t output_length(const ArchitectureSpec& spec, std::size_t uttLen) {
  const auto flatten = spec.flatten_index();
  if (!flatten) return infer_shapes(spec, uttLen).convOutTime;
  ArchitectureSpec stack = spec;
  stack.layers.resize(*flatten);
  const std::size_t convOut = infer_shapes(stack, uttLen).convOutTime;
  const ConvConfig* top = nullptr;
  for (const auto& layer : stack.layers) {
    if (const auto* c = std::get_if<ConvConfig>(&layer)) top = c;
  }
  if (top && top->padTime > 0) return convOut;
  return infer_shapes(spec, uttLen).outputTime();
}

double max_row_sum_error(const Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("max_row_sum_error: expected rows, got " + shape_string(probs.shape()));
  double worst = 0.0;
  for (std::size_t r = 0; r < probs.dim(0); ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < probs.dim(1); ++k) s += probs.get(r * probs.dim(1) + k);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

namespace testing {

PosteriorMatrix evaluate_naive_full_pass(const Network& net, const Utterance& utt) {
  require_frames(net, utt);
  return PosteriorMatrix{net.predict(padded_input(net, utt))};
}

std::vector<Tensor> trace_full_pass(const Network& net, const Utterance& utt) {
  require_frames(net, utt);
  return net.trace(padded_input(net, utt));
}

std::vector<Tensor> trace_window(const Network& net, const Utterance& utt, std::size_t frame) {
  require_frames(net, utt);
  const auto& g = net.spec().geometry;
  Tensor w = extract_window(utt.features, frame, g.contextRadius, g.rightContext()).cast(net.dtype());
  return net.trace(w.reshaped({1, 1, g.windowLen, g.featDim}));
}

}  // namespace testing

}  // namespace seqcnn
