#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "seqcnn/ops.hpp"

namespace seqcnn {

/// Exact positive fraction, used for the channel-width divisor.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  static Rational parse(const std::string& text);
  Rational normalized() const;
  std::string to_string() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// `count * this` if it is a positive integer.
  std::optional<std::size_t> scale(std::size_t count) const;

  bool operator==(const Rational& other) const;
};

/// Built-in 10-layer variants: (a) time pooling with time padding throughout,
/// (b) no time pooling, time padding only on the lower four conv layers,
/// (c) neither time padding nor time pooling.
enum class Variant { A, B, C, Custom };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct InputGeometry {
  std::size_t contextRadius = 11;  // frames left of the centre frame
  std::size_t windowLen = 23;      // 1 + 2*ctx, or 2 + 2*ctx for even windows
  std::size_t featDim = 40;
  std::size_t numStates = 8;

  std::size_t rightContext() const { return windowLen - 1 - contextRadius; }
  void validate() const;
  bool operator==(const InputGeometry&) const = default;
};

struct BatchNormSpec {
  double epsilon = 1e-5;
  double momentum = 0.9;
  bool operator==(const BatchNormSpec&) const = default;
};

struct ActivationSpec {
  std::string function = "relu";
  bool operator==(const ActivationSpec&) const = default;
};

struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};

struct DenseSpec {
  std::size_t inDim = 1;
  std::size_t outDim = 1;
  bool operator==(const DenseSpec&) const = default;
};

struct SoftmaxSpec {
  bool operator==(const SoftmaxSpec&) const = default;
};

/// One layer; the alternative held is the layer kind.
using LayerDescriptor =
    std::variant<ConvConfig, PoolConfig, BatchNormSpec, ActivationSpec, FlattenSpec, DenseSpec,
                 SoftmaxSpec>;

enum class LayerKind { Conv, Pool, BatchNorm, Activation, Flatten, Dense, Softmax };

LayerKind kind_of(const LayerDescriptor& layer);
std::string to_string(LayerKind kind);

struct ArchitectureSpec {
  std::string name = "custom";
  Variant variant = Variant::Custom;
  InputGeometry geometry;
  std::vector<LayerDescriptor> layers;
  Rational widthScale;

  /// Index of the flatten layer, if the spec has a classifier head.
  std::optional<std::size_t> flatten_index() const;
  bool operator==(const ArchitectureSpec&) const = default;
};

struct BuiltinOptions {
  bool batchNorm = false;
  /// 1-based conv layers followed by batch norm; empty means all of them.
  std::vector<std::size_t> batchNormConvLayers;
  /// Width of the hidden dense layer before width scaling.
  std::size_t hiddenDim = 1024;
};

/// Base channel progression of the ten conv layers before width scaling.
inline constexpr std::size_t kBuiltinChannels[10] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512};

ArchitectureSpec build_builtin(Variant variant, std::size_t featDim, std::size_t numStates,
                               Rational widthScale, const BuiltinOptions& options = {});

struct LayerShape {
  std::size_t layerIndex = 0;
  std::size_t outTime = 0;
  std::size_t outFreq = 0;
  std::size_t outChannels = 0;
};

struct ShapeReport {
  std::vector<LayerShape> perLayer;
  /// Extents at the end of the convolutional stack (before any flatten).
  std::size_t convOutTime = 0;
  std::size_t convOutFreq = 0;
  std::size_t convOutChannels = 0;
  /// Time extent the classifier head consumes per output frame.
  std::size_t headSpanTime = 0;
  Rational outputFramesPerInputFrame;
  std::size_t timeDownsampleFactor = 1;
  std::size_t receptiveFieldTime = 1;
  bool streamable = false;

  /// Time extent of the last layer.
  std::size_t outputTime() const { return perLayer.empty() ? 0 : perLayer.back().outTime; }
};

/// Per-layer extents for an input of `inputTime` frames. Layers after the
/// flatten are applied position-wise along time: the head consumes
/// `headSpanTime` frames of the conv map per output frame.
ShapeReport infer_shapes(const ArchitectureSpec& spec, std::size_t inputTime);

struct ReceptiveField {
  std::size_t rfTime = 1;
  std::size_t strideTime = 1;
};

ReceptiveField receptive_field(const ArchitectureSpec& spec);

/// Reason the spec cannot be evaluated convolutionally over a full
/// utterance, naming every offending layer with frame-rate changes
/// (time strides) before time padding; nullopt when streamable.
std::optional<std::string> streamability_issue(const ArchitectureSpec& spec);
bool is_streamable(const ArchitectureSpec& spec);

/// Checks every structural invariant, throwing ParseError/ShapeError.
void validate_spec(const ArchitectureSpec& spec);

std::string serialize_spec(const ArchitectureSpec& spec);
ArchitectureSpec parse_spec(const std::string& text);

}  // namespace seqcnn
