#include "seqcnn/arch.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "seqcnn/keyvalue.hpp"

namespace seqcnn {

namespace {

constexpr std::string_view kFormatTag = "seqcnn-arch-1";
constexpr std::size_t kBuiltinFreqAfterPool[4] = {20, 10, 4, 2};

struct SpecIssue {
  std::optional<std::size_t> layer;
  std::string message;
};

[[noreturn]] void fail(std::optional<std::size_t> layer, const std::string& message) {
  throw SpecIssue{layer, message};
}

std::string layer_label(std::size_t index, const LayerDescriptor& layer) {
  return "layer " + std::to_string(index) + " (" + to_string(kind_of(layer)) + ")";
}

struct StackExtents {
  std::size_t time = 0;
  std::size_t freq = 0;
  std::size_t channels = 0;
  std::vector<LayerShape> perLayer;
  std::vector<std::size_t> freqAfterPool;
  std::optional<std::size_t> flatten;
};

// Walks the layers before any flatten. Dies with a SpecIssue naming the
// layer whose output extent would drop below one.
StackExtents walk_stack(const ArchitectureSpec& spec, std::size_t inputTime) {
  StackExtents s;
  s.time = inputTime;
  s.freq = spec.geometry.featDim;
  s.channels = 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (std::holds_alternative<FlattenSpec>(layer)) {
      s.flatten = i;
      return s;
    }
    if (const auto* conv = std::get_if<ConvConfig>(&layer)) {
      if (conv->inChannels != s.channels) {
        fail(i, layer_label(i, layer) + ": in_channels " + std::to_string(conv->inChannels) +
                    " but previous layer yields " + std::to_string(s.channels));
      }
      if (conv->outChannels == 0 || conv->kernelTime == 0 || conv->kernelFreq == 0 ||
          conv->strideTime == 0 || conv->strideFreq == 0) {
        fail(i, layer_label(i, layer) + ": zero channel count, kernel or stride");
      }
      if (s.time + 2 * conv->padTime < conv->kernelTime) {
        fail(i, layer_label(i, layer) + ": time extent " + std::to_string(s.time) +
                    " too small for kernel " + std::to_string(conv->kernelTime));
      }
      if (s.freq + 2 * conv->padFreq < conv->kernelFreq) {
        fail(i, layer_label(i, layer) + ": frequency extent " + std::to_string(s.freq) +
                    " too small for kernel " + std::to_string(conv->kernelFreq));
      }
      s.time = (s.time + 2 * conv->padTime - conv->kernelTime) / conv->strideTime + 1;
      s.freq = (s.freq + 2 * conv->padFreq - conv->kernelFreq) / conv->strideFreq + 1;
      s.channels = conv->outChannels;
    } else if (const auto* pool = std::get_if<PoolConfig>(&layer)) {
      if (pool->kernelTime == 0 || pool->kernelFreq == 0 || pool->strideTime == 0 ||
          pool->strideFreq == 0 || pool->strideTime > pool->kernelTime ||
          pool->strideFreq > pool->kernelFreq) {
        fail(i, layer_label(i, layer) + ": strides must be positive and no larger than kernels");
      }
      if (s.time < pool->kernelTime) {
        fail(i, layer_label(i, layer) + ": time extent " + std::to_string(s.time) +
                    " too small for kernel " + std::to_string(pool->kernelTime));
      }
      if (s.freq < pool->kernelFreq) {
        fail(i, layer_label(i, layer) + ": frequency extent " + std::to_string(s.freq) +
                    " too small for kernel " + std::to_string(pool->kernelFreq));
      }
      s.time = (s.time - pool->kernelTime) / pool->strideTime + 1;
      s.freq = (s.freq - pool->kernelFreq) / pool->strideFreq + 1;
      s.freqAfterPool.push_back(s.freq);
    } else if (const auto* bn = std::get_if<BatchNormSpec>(&layer)) {
      if (!(bn->epsilon > 0.0) || !(bn->momentum > 0.0 && bn->momentum < 1.0)) {
        fail(i, layer_label(i, layer) + ": epsilon must be > 0 and momentum in (0,1)");
      }
    } else if (const auto* act = std::get_if<ActivationSpec>(&layer)) {
      if (act->function != "relu") {
        fail(i, layer_label(i, layer) + ": unsupported activation '" + act->function + "'");
      }
    } else {
      fail(i, layer_label(i, layer) + ": only allowed after a flatten layer");
    }
    s.perLayer.push_back({i, s.time, s.freq, s.channels});
  }
  return s;
}

// Head layers after the flatten, applied position-wise along time.
void walk_head(const ArchitectureSpec& spec, StackExtents& s, std::size_t headSpan,
               std::vector<LayerShape>& perLayer, std::size_t& outTime) {
  const std::size_t flatten = *s.flatten;
  if (s.time < headSpan) {
    fail(flatten, layer_label(flatten, spec.layers[flatten]) + ": time extent " +
                      std::to_string(s.time) + " shorter than head span " + std::to_string(headSpan));
  }
  outTime = s.time - headSpan + 1;
  std::size_t dim = s.channels * headSpan * s.freq;
  perLayer.push_back({flatten, outTime, 1, dim});
  for (std::size_t i = flatten + 1; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      if (dense->inDim != dim) {
        fail(i, layer_label(i, layer) + ": in_dim " + std::to_string(dense->inDim) +
                    " but previous layer yields " + std::to_string(dim));
      }
      if (dense->outDim == 0) fail(i, layer_label(i, layer) + ": zero out_dim");
      dim = dense->outDim;
    } else if (const auto* act = std::get_if<ActivationSpec>(&layer)) {
      if (act->function != "relu") {
        fail(i, layer_label(i, layer) + ": unsupported activation '" + act->function + "'");
      }
    } else if (std::holds_alternative<SoftmaxSpec>(layer)) {
      if (i + 1 != spec.layers.size()) fail(i, layer_label(i, layer) + ": softmax must be last");
    } else {
      fail(i, layer_label(i, layer) + ": not allowed after flatten");
    }
    perLayer.push_back({i, outTime, 1, dim});
  }
}

std::size_t head_span(const ArchitectureSpec& spec) {
  const auto at_window = walk_stack(spec, spec.geometry.windowLen);
  return at_window.flatten ? at_window.time : 0;
}

ShapeReport infer_shapes_impl(const ArchitectureSpec& spec, std::size_t inputTime) {
  if (inputTime == 0) fail(std::nullopt, "input time must be at least 1 frame");
  ShapeReport r;
  const std::size_t span = head_span(spec);
  auto stack = walk_stack(spec, inputTime);
  r.perLayer = stack.perLayer;
  r.convOutTime = stack.time;
  r.convOutFreq = stack.freq;
  r.convOutChannels = stack.channels;
  if (stack.flatten) {
    std::size_t outTime = 0;
    walk_head(spec, stack, span, r.perLayer, outTime);
    r.headSpanTime = span;
  }
  const auto rf = receptive_field(spec);
  r.timeDownsampleFactor = rf.strideTime;
  r.receptiveFieldTime = rf.rfTime;
  r.outputFramesPerInputFrame = Rational{1, static_cast<std::int64_t>(rf.strideTime)};
  r.streamable = is_streamable(spec);
  return r;
}

void check_spec(const ArchitectureSpec& spec) {
  const auto& g = spec.geometry;
  if (g.windowLen != 1 + 2 * g.contextRadius && g.windowLen != 2 + 2 * g.contextRadius) {
    fail(std::nullopt, "window_len " + std::to_string(g.windowLen) +
                           " must equal 1 + 2*context_radius (or 2 + 2*context_radius)");
  }
  if (g.featDim < 1) fail(std::nullopt, "feat_dim must be at least 1");
  if (g.numStates < 2) fail(std::nullopt, "num_states must be at least 2");
  if (spec.widthScale.num <= 0 || spec.widthScale.den <= 0) {
    fail(std::nullopt, "width_scale must be a positive fraction");
  }
  if (spec.layers.empty()) fail(std::nullopt, "architecture has no layers");

  auto stack = walk_stack(spec, g.windowLen);
  if (stack.flatten) {
    std::vector<LayerShape> head;
    std::size_t outTime = 0;
    walk_head(spec, stack, stack.time, head, outTime);
    std::size_t last_dim = 0;
    for (const auto& layer : spec.layers) {
      if (const auto* d = std::get_if<DenseSpec>(&layer)) last_dim = d->outDim;
    }
    if (last_dim == 0) fail(*stack.flatten, "classifier head has no dense layer");
    if (last_dim != g.numStates) {
      fail(std::nullopt, "final dense out_dim " + std::to_string(last_dim) + " != num_states " +
                             std::to_string(g.numStates));
    }
  }

  if (spec.variant == Variant::C) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& layer = spec.layers[i];
      if (const auto* conv = std::get_if<ConvConfig>(&layer); conv && conv->padTime > 0) {
        fail(i, layer_label(i, layer) + ": variant c forbids time padding (pad_time = " +
                    std::to_string(conv->padTime) + ")");
      }
      if (const auto* pool = std::get_if<PoolConfig>(&layer); pool && pool->strideTime > 1) {
        fail(i, layer_label(i, layer) + ": variant c forbids time pooling stride " +
                    std::to_string(pool->strideTime));
      }
    }
  }
  if (spec.variant != Variant::Custom) {
    const std::vector<std::size_t> expected(std::begin(kBuiltinFreqAfterPool),
                                            std::end(kBuiltinFreqAfterPool));
    if (stack.freqAfterPool != expected) {
      std::ostringstream os;
      os << "variant " << to_string(spec.variant)
         << " requires frequency extents 20,10,4,2 after its four pooling stages, got";
      for (auto f : stack.freqAfterPool) os << ' ' << f;
      if (stack.freqAfterPool.empty()) os << " none";
      fail(std::nullopt, os.str());
    }
  }
}

std::string issue_text(const SpecIssue& issue) { return issue.message; }

}  // namespace

// ---------------------------------------------------------------------------

Rational Rational::parse(const std::string& text) {
  const auto slash = text.find('/');
  Rational r;
  try {
    if (slash == std::string::npos) {
      r.num = static_cast<std::int64_t>(parse_uint(text, "width scale"));
      r.den = 1;
    } else {
      r.num = static_cast<std::int64_t>(parse_uint(text.substr(0, slash), "width scale"));
      r.den = static_cast<std::int64_t>(parse_uint(text.substr(slash + 1), "width scale"));
    }
  } catch (const ParseError&) {
    throw ParseError("invalid fraction '" + text + "' (expected p/q)");
  }
  if (r.num <= 0 || r.den <= 0) throw ParseError("fraction '" + text + "' must be positive");
  return r.normalized();
}

Rational Rational::normalized() const {
  const std::int64_t g = std::gcd(num, den);
  return g == 0 ? *this : Rational{num / g, den / g};
}

std::string Rational::to_string() const {
  const auto n = normalized();
  return n.den == 1 ? std::to_string(n.num) : std::to_string(n.num) + "/" + std::to_string(n.den);
}

std::optional<std::size_t> Rational::scale(std::size_t count) const {
  const auto n = normalized();
  const auto scaled = static_cast<std::int64_t>(count) * n.num;
  if (n.den <= 0 || scaled % n.den != 0 || scaled / n.den <= 0) return std::nullopt;
  return static_cast<std::size_t>(scaled / n.den);
}

bool Rational::operator==(const Rational& other) const {
  const auto a = normalized();
  const auto b = other.normalized();
  return a.num == b.num && a.den == b.den;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "a";
    case Variant::B: return "b";
    case Variant::C: return "c";
    case Variant::Custom: return "custom";
  }
  return "custom";
}

Variant parse_variant(const std::string& text) {
  if (text == "a") return Variant::A;
  if (text == "b") return Variant::B;
  if (text == "c") return Variant::C;
  if (text == "custom") return Variant::Custom;
  throw ParseError("unknown variant '" + text + "' (expected a, b, c or custom)");
}

void InputGeometry::validate() const {
  if (windowLen != 1 + 2 * contextRadius && windowLen != 2 + 2 * contextRadius) {
    throw ParseError("window_len must equal 1 + 2*context_radius (or 2 + 2*context_radius)");
  }
  if (featDim < 1 || numStates < 2) throw ParseError("feat_dim >= 1 and num_states >= 2 required");
}

LayerKind kind_of(const LayerDescriptor& layer) { return static_cast<LayerKind>(layer.index()); }

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Pool: return "pool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Activation: return "activation";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Softmax: return "softmax";
  }
  return "unknown";
}

std::optional<std::size_t> ArchitectureSpec::flatten_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (std::holds_alternative<FlattenSpec>(layers[i])) return i;
  }
  return std::nullopt;
}

ArchitectureSpec build_builtin(Variant variant, std::size_t featDim, std::size_t numStates,
                               Rational widthScale, const BuiltinOptions& options) {
  if (variant == Variant::Custom) throw std::invalid_argument("build_builtin: variant must be a, b or c");
  if (featDim != 40) {
    throw std::invalid_argument("build_builtin: the built-in pooling plan needs feat_dim 40, got " +
                                std::to_string(featDim));
  }
  ArchitectureSpec spec;
  spec.variant = variant;
  spec.name = "builtin-" + to_string(variant) + (options.batchNorm ? "-bn" : "");
  spec.widthScale = widthScale.normalized();
  spec.geometry.featDim = featDim;
  spec.geometry.numStates = numStates;
  switch (variant) {
    case Variant::A:
      spec.geometry.contextRadius = 7;
      spec.geometry.windowLen = 16;
      break;
    case Variant::B:
      spec.geometry.contextRadius = 7;
      spec.geometry.windowLen = 15;
      break;
    default:
      spec.geometry.contextRadius = 11;
      spec.geometry.windowLen = 23;
      break;
  }

  auto bn_after = [&](std::size_t conv) {
    if (!options.batchNorm) return false;
    const auto& sel = options.batchNormConvLayers;
    return sel.empty() || std::find(sel.begin(), sel.end(), conv) != sel.end();
  };
  auto scaled = [&](std::size_t count, const char* what) {
    const auto c = widthScale.scale(count);
    if (!c) {
      throw std::invalid_argument(std::string("build_builtin: width scale ") + widthScale.to_string() +
                                  " gives a non-integral " + what + " for " + std::to_string(count));
    }
    return *c;
  };

  std::size_t channels = 1;
  for (std::size_t conv = 1; conv <= 10; ++conv) {
    ConvConfig c;
    c.inChannels = channels;
    c.outChannels = scaled(kBuiltinChannels[conv - 1], "channel count");
    c.kernelTime = 3;
    c.kernelFreq = 3;
    c.padFreq = 1;
    c.padTime = (variant == Variant::A || (variant == Variant::B && conv <= 4)) ? 1 : 0;
    c.bias = !bn_after(conv);
    spec.layers.emplace_back(c);
    if (bn_after(conv)) spec.layers.emplace_back(BatchNormSpec{});
    spec.layers.emplace_back(ActivationSpec{});
    channels = c.outChannels;

    std::optional<PoolConfig> pool;
    if (conv == 2 || conv == 4) pool = PoolConfig{1, 2, 1, 2};
    if (conv == 7) pool = PoolConfig{1, 4, 1, 2};
    if (conv == 10) pool = PoolConfig{1, 2, 1, 2};
    if (pool && variant == Variant::A && (conv == 7 || conv == 10)) {
      pool->kernelTime = 2;
      pool->strideTime = 2;
    }
    if (pool) spec.layers.emplace_back(*pool);
  }

  ArchitectureSpec stack_only = spec;
  const auto stack = walk_stack(stack_only, spec.geometry.windowLen);
  const std::size_t flat = stack.channels * stack.time * stack.freq;
  const std::size_t hidden = scaled(options.hiddenDim, "hidden width");
  spec.layers.emplace_back(FlattenSpec{});
  spec.layers.emplace_back(DenseSpec{flat, hidden});
  spec.layers.emplace_back(ActivationSpec{});
  spec.layers.emplace_back(DenseSpec{hidden, numStates});
  spec.layers.emplace_back(SoftmaxSpec{});
  validate_spec(spec);
  return spec;
}

ShapeReport infer_shapes(const ArchitectureSpec& spec, std::size_t inputTime) {
  try {
    return infer_shapes_impl(spec, inputTime);
  } catch (const SpecIssue& issue) {
    throw ShapeError("infer_shapes(input time " + std::to_string(inputTime) + "): " + issue_text(issue));
  }
}

ReceptiveField receptive_field(const ArchitectureSpec& spec) {
  ReceptiveField rf;
  for (const auto& layer : spec.layers) {
    if (std::holds_alternative<FlattenSpec>(layer)) break;
    if (const auto* conv = std::get_if<ConvConfig>(&layer)) {
      rf.rfTime += (conv->kernelTime - 1) * rf.strideTime;
      rf.strideTime *= conv->strideTime;
    } else if (const auto* pool = std::get_if<PoolConfig>(&layer)) {
      rf.rfTime += (pool->kernelTime - 1) * rf.strideTime;
      rf.strideTime *= pool->strideTime;
    }
  }
  if (spec.flatten_index()) {
    try {
      const std::size_t span = head_span(spec);
      rf.rfTime += (span - 1) * rf.strideTime;
    } catch (const SpecIssue& issue) {
      throw ShapeError("receptive_field: " + issue_text(issue));
    }
  }
  return rf;
}

std::optional<std::string> streamability_issue(const ArchitectureSpec& spec) {
  std::vector<std::string> rate, padding;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    const std::string at = " at layer " + std::to_string(i);
    if (const auto* conv = std::get_if<ConvConfig>(&layer)) {
      if (conv->strideTime > 1) rate.push_back("time stride " + std::to_string(conv->strideTime) + at + " (conv)");
      if (conv->padTime > 0) padding.push_back("time padding " + std::to_string(conv->padTime) + at + " (conv)");
    } else if (const auto* pool = std::get_if<PoolConfig>(&layer)) {
      if (pool->strideTime > 1) {
        rate.push_back("time pooling stride " + std::to_string(pool->strideTime) + at + " (pool)");
      }
    }
  }
  rate.insert(rate.end(), padding.begin(), padding.end());
  if (rate.empty()) return std::nullopt;
  std::string text = rate.front();
  for (std::size_t i = 1; i < rate.size(); ++i) text += "; " + rate[i];
  return text;
}

bool is_streamable(const ArchitectureSpec& spec) { return !streamability_issue(spec).has_value(); }

void validate_spec(const ArchitectureSpec& spec) {
  try {
    check_spec(spec);
  } catch (const SpecIssue& issue) {
    throw ParseError("invalid architecture '" + spec.name + "': " + issue_text(issue));
  }
}

// ---------------------------------------------------------------------------
// Text format

std::string serialize_spec(const ArchitectureSpec& spec) {
  std::ostringstream os;
  const auto& g = spec.geometry;
  os << "format = " << kFormatTag << '\n'
     << "name = " << spec.name << '\n'
     << "variant = " << to_string(spec.variant) << '\n'
     << "context_radius = " << g.contextRadius << '\n'
     << "window_len = " << g.windowLen << '\n'
     << "feat_dim = " << g.featDim << '\n'
     << "num_states = " << g.numStates << '\n'
     << "width_scale = " << spec.widthScale.to_string() << '\n';
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    os << "\n[layer " << i << "]\n"
       << "kind = " << to_string(kind_of(layer)) << '\n';
    if (const auto* c = std::get_if<ConvConfig>(&layer)) {
      os << "in_channels = " << c->inChannels << '\n'
         << "out_channels = " << c->outChannels << '\n'
         << "kernel_time = " << c->kernelTime << '\n'
         << "kernel_freq = " << c->kernelFreq << '\n'
         << "pad_time = " << c->padTime << '\n'
         << "pad_freq = " << c->padFreq << '\n'
         << "stride_time = " << c->strideTime << '\n'
         << "stride_freq = " << c->strideFreq << '\n'
         << "bias = " << (c->bias ? "true" : "false") << '\n';
    } else if (const auto* p = std::get_if<PoolConfig>(&layer)) {
      os << "kernel_time = " << p->kernelTime << '\n'
         << "kernel_freq = " << p->kernelFreq << '\n'
         << "stride_time = " << p->strideTime << '\n'
         << "stride_freq = " << p->strideFreq << '\n';
    } else if (const auto* b = std::get_if<BatchNormSpec>(&layer)) {
      os << "epsilon = " << format_double(b->epsilon) << '\n'
         << "momentum = " << format_double(b->momentum) << '\n';
    } else if (const auto* a = std::get_if<ActivationSpec>(&layer)) {
      os << "function = " << a->function << '\n';
    } else if (const auto* d = std::get_if<DenseSpec>(&layer)) {
      os << "in_dim = " << d->inDim << '\n' << "out_dim = " << d->outDim << '\n';
    }
  }
  return os.str();
}

ArchitectureSpec parse_spec(const std::string& text) {
  const auto doc = KeyValueDocument::parse(text);
  const auto& root = doc.root();
  root.reject_unknown({"format", "name", "variant", "context_radius", "window_len", "feat_dim",
                       "num_states", "width_scale"});
  if (root.get_string("format", std::string(kFormatTag)) != kFormatTag) {
    throw ParseError(root.where("format") + ": unsupported format '" + root.get_string("format") + "'");
  }
  ArchitectureSpec spec;
  spec.name = root.get_string("name", "custom");
  try {
    spec.variant = parse_variant(root.get_string("variant", "custom"));
  } catch (const ParseError& e) {
    throw ParseError(root.where("variant") + ": " + e.what());
  }
  spec.geometry.contextRadius = root.get_uint("context_radius");
  spec.geometry.windowLen = root.get_uint("window_len", 1 + 2 * spec.geometry.contextRadius);
  spec.geometry.featDim = root.get_uint("feat_dim", 40);
  spec.geometry.numStates = root.get_uint("num_states");
  try {
    spec.widthScale = Rational::parse(root.get_string("width_scale", "1"));
  } catch (const ParseError& e) {
    throw ParseError(root.where("width_scale") + ": " + e.what());
  }

  std::vector<std::size_t> section_lines;
  for (const auto& sec : doc.sections()) {
    if (&sec == &doc.root()) continue;
    if (sec.name != "layer") {
      throw ParseError("line " + std::to_string(sec.line) + ": unknown section [" + sec.name + "]");
    }
    if (!sec.index || *sec.index != spec.layers.size()) {
      throw ParseError("line " + std::to_string(sec.line) + ": expected [layer " +
                       std::to_string(spec.layers.size()) + "]");
    }
    section_lines.push_back(sec.line);
    const std::string kind = sec.get_string("kind");
    if (kind == "conv") {
      sec.reject_unknown({"kind", "in_channels", "out_channels", "kernel_time", "kernel_freq",
                          "pad_time", "pad_freq", "stride_time", "stride_freq", "bias"});
      ConvConfig c;
      c.inChannels = sec.get_uint("in_channels");
      c.outChannels = sec.get_uint("out_channels");
      c.kernelTime = sec.get_uint("kernel_time", 3);
      c.kernelFreq = sec.get_uint("kernel_freq", 3);
      c.padTime = sec.get_uint("pad_time", 0);
      c.padFreq = sec.get_uint("pad_freq", 0);
      c.strideTime = sec.get_uint("stride_time", 1);
      c.strideFreq = sec.get_uint("stride_freq", 1);
      c.bias = sec.get_bool("bias", true);
      spec.layers.emplace_back(c);
    } else if (kind == "pool") {
      sec.reject_unknown({"kind", "kernel_time", "kernel_freq", "stride_time", "stride_freq"});
      PoolConfig p;
      p.kernelTime = sec.get_uint("kernel_time", 1);
      p.kernelFreq = sec.get_uint("kernel_freq", 1);
      p.strideTime = sec.get_uint("stride_time", p.kernelTime);
      p.strideFreq = sec.get_uint("stride_freq", p.kernelFreq);
      spec.layers.emplace_back(p);
    } else if (kind == "batchnorm") {
      sec.reject_unknown({"kind", "epsilon", "momentum"});
      spec.layers.emplace_back(BatchNormSpec{sec.get_double("epsilon", 1e-5), sec.get_double("momentum", 0.9)});
    } else if (kind == "activation") {
      sec.reject_unknown({"kind", "function"});
      spec.layers.emplace_back(ActivationSpec{sec.get_string("function", "relu")});
    } else if (kind == "flatten") {
      sec.reject_unknown({"kind"});
      spec.layers.emplace_back(FlattenSpec{});
    } else if (kind == "dense") {
      sec.reject_unknown({"kind", "in_dim", "out_dim"});
      spec.layers.emplace_back(DenseSpec{sec.get_uint("in_dim"), sec.get_uint("out_dim")});
    } else if (kind == "softmax") {
      sec.reject_unknown({"kind"});
      spec.layers.emplace_back(SoftmaxSpec{});
    } else {
      throw ParseError(sec.where("kind") + ": unknown layer kind '" + kind + "'");
    }
  }

  try {
    check_spec(spec);
  } catch (const SpecIssue& issue) {
    std::string where = "line " + std::to_string(root.line == 0 ? 1 : root.line);
    if (issue.layer && *issue.layer < section_lines.size()) {
      where = "line " + std::to_string(section_lines[*issue.layer]) + " [layer " +
              std::to_string(*issue.layer) + "]";
    }
    throw ParseError(where + ": " + issue.message);
  }
  return spec;
}

}  // namespace seqcnn
