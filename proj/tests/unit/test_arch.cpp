#include <gtest/gtest.h>

#include "seqcnn/keyvalue.hpp"
#include "seqcnn/network.hpp"
#include "support/support.hpp"

using namespace seqcnn;

namespace {

ArchitectureSpec builtin(Variant v, Rational ws = {1, 8}, bool bn = false) {
  BuiltinOptions opts;
  opts.batchNorm = bn;
  return build_builtin(v, 40, 8, ws, opts);
}

std::vector<std::size_t> pool_freqs(const ArchitectureSpec& spec, const ShapeReport& rep) {
  std::vector<std::size_t> out;
  for (const auto& s : rep.perLayer)
    if (kind_of(spec.layers[s.layerIndex]) == LayerKind::Pool) out.push_back(s.outFreq);
  return out;
}

}  // namespace

TEST(Rational, ParseAndNormalize) {
  EXPECT_EQ(Rational::parse("2/16"), (Rational{1, 8}));
  EXPECT_EQ(Rational::parse("3").to_string(), "3");
  EXPECT_EQ(Rational::parse("4/6").to_string(), "2/3");
  EXPECT_THROW(Rational::parse("0/4"), ParseError);
  EXPECT_THROW(Rational::parse("x/4"), ParseError);
  EXPECT_THROW(Rational::parse("1/"), ParseError);
  EXPECT_EQ((Rational{1, 8}.scale(64)), std::optional<std::size_t>(8));
  EXPECT_FALSE((Rational{1, 128}.scale(64).has_value()));
}

TEST(Variant, ParseNames) {
  EXPECT_EQ(parse_variant("a"), Variant::A);
  EXPECT_EQ(parse_variant("c"), Variant::C);
  EXPECT_THROW(parse_variant("d"), ParseError);
}

TEST(Builtin, VariantAShapes) {
  const auto spec = builtin(Variant::A);
  const ShapeReport rep = infer_shapes(spec, 16);
  EXPECT_EQ(rep.convOutTime, 4u);
  EXPECT_EQ(rep.convOutFreq, 2u);
  EXPECT_EQ(rep.convOutChannels, 64u);
  EXPECT_EQ(pool_freqs(spec, rep), (std::vector<std::size_t>{20, 10, 4, 2}));
  EXPECT_EQ(rep.outputFramesPerInputFrame, (Rational{1, 4}));
  EXPECT_EQ(rep.outputTime(), 1u);
}

TEST(Builtin, VariantBShapes) {
  const ShapeReport rep = infer_shapes(builtin(Variant::B), 15);
  EXPECT_EQ(rep.convOutTime, 3u);
  EXPECT_EQ(rep.convOutFreq, 2u);
  EXPECT_EQ(rep.outputTime(), 1u);
}

TEST(Builtin, VariantCShapes) {
  const ShapeReport rep = infer_shapes(builtin(Variant::C), 23);
  EXPECT_EQ(rep.convOutTime, 3u);
  EXPECT_EQ(rep.convOutFreq, 2u);
  EXPECT_EQ(rep.outputTime(), 1u);
  EXPECT_EQ(receptive_field(builtin(Variant::C)).rfTime, 23u);
}

TEST(Builtin, ChannelsScaleWithWidth) {
  for (const Rational ws : {Rational{1, 1}, Rational{1, 4}, Rational{1, 16}}) {
    const auto spec = builtin(Variant::C, ws);
    std::size_t conv = 0;
    for (const auto& layer : spec.layers)
      if (const auto* c = std::get_if<ConvConfig>(&layer)) {
        EXPECT_EQ(c->outChannels, *ws.scale(kBuiltinChannels[conv]));
        EXPECT_EQ(c->kernelTime, 3u);
        EXPECT_EQ(c->kernelFreq, 3u);
        ++conv;
      }
    EXPECT_EQ(conv, 10u);
  }
  EXPECT_THROW(builtin(Variant::C, {1, 128}), std::invalid_argument);
  EXPECT_THROW(build_builtin(Variant::C, 39, 8, {1, 8}), std::invalid_argument);
}

TEST(Builtin, BatchNormDropsConvBias) {
  const auto spec = builtin(Variant::B, {1, 8}, true);
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (const auto* c = std::get_if<ConvConfig>(&spec.layers[i])) {
      EXPECT_FALSE(c->bias);
      EXPECT_EQ(kind_of(spec.layers[i + 1]), LayerKind::BatchNorm);
    }
}

TEST(Streamability, VariantAReportsTimePoolingFirst) {
  const auto issue = streamability_issue(builtin(Variant::A));
  ASSERT_TRUE(issue.has_value());
  EXPECT_EQ(issue->rfind("time pooling stride 2", 0), 0u) << *issue;
  EXPECT_NE(issue->find("time padding"), std::string::npos);
}

TEST(Streamability, VariantBReportsPadding) {
  const auto issue = streamability_issue(builtin(Variant::B));
  ASSERT_TRUE(issue.has_value());
  EXPECT_EQ(issue->rfind("time padding 1 at layer 0 (conv)", 0), 0u) << *issue;
  EXPECT_EQ(issue->find("pool"), std::string::npos);
}

TEST(Streamability, VariantCIsStreamable) {
  EXPECT_TRUE(is_streamable(builtin(Variant::C)));
  EXPECT_TRUE(infer_shapes(builtin(Variant::C), 23).streamable);
}

TEST(Streamability, TimeStrideIsReported) {
  ArchitectureSpec spec = builtin(Variant::C);
  std::get<ConvConfig>(spec.layers[0]).strideTime = 2;
  const auto issue = streamability_issue(spec);
  ASSERT_TRUE(issue.has_value());
  EXPECT_EQ(issue->rfind("time stride 2 at layer 0", 0), 0u) << *issue;
}

TEST(InferShapes, LongInputsForConvMode) {
  const auto spec = builtin(Variant::C);
  EXPECT_EQ(infer_shapes(spec, 400).outputTime(), 378u);
  EXPECT_EQ(infer_shapes(spec, 23).outputTime(), 1u);
  EXPECT_THROW(infer_shapes(spec, 22), ShapeError);
}

// Perturb one input frame and count how many output frames move.
TEST(ReceptiveField, MatchesPerturbationProbe) {
  Rng rng(4);
  for (int trial = 0; trial < 8; ++trial) {
    const ArchitectureSpec spec = test::random_spec(rng, false, true);
    const Network net = Network::create(spec, DType::F64, 100 + trial);
    const std::size_t T = 40;
    const Utterance u = test::random_utterance(T, spec.geometry.featDim, rng);
    const Tensor base = evaluate_convolutional(net, u).values;
    Utterance v = u;
    Tensor f = v.features.cast(DType::F64);
    for (std::size_t j = 0; j < spec.geometry.featDim; ++j) f.set(20 * spec.geometry.featDim + j, 5.0);
    v.features = f.cast(DType::F32);
    const Tensor moved = evaluate_convolutional(net, v).values;
    const std::size_t states = spec.geometry.numStates;
    std::size_t lo = T, hi = 0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < states; ++s)
        if (std::abs(base.get(t * states + s) - moved.get(t * states + s)) > 0.0) {
          lo = std::min(lo, t);
          hi = std::max(hi, t);
        }
    const std::size_t rf = receptive_field(spec).rfTime;
    ASSERT_LE(lo, hi) << "trial " << trial;
    EXPECT_LE(hi - lo + 1, rf) << "trial " << trial;
    EXPECT_EQ(rf, spec.geometry.windowLen) << "trial " << trial;
  }
}

TEST(Serialization, RoundTripsBuiltinsAndRandomSpecs) {
  for (const Variant v : {Variant::A, Variant::B, Variant::C}) {
    const auto spec = builtin(v, {1, 8}, true);
    EXPECT_EQ(parse_spec(serialize_spec(spec)), spec);
  }
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const auto spec = test::random_spec(rng);
    EXPECT_EQ(parse_spec(serialize_spec(spec)), spec);
  }
}

TEST(Serialization, RejectsMalformedText) {
  const std::string good = serialize_spec(builtin(Variant::C));
  EXPECT_THROW(parse_spec("format = nope\n"), ParseError);
  std::string bad = good;
  bad.replace(bad.find("in_channels = 8"), 15, "in_channels = 9");
  EXPECT_THROW(parse_spec(bad), ParseError);
  std::string unknown = good + "\n[layer 99]\nkind = teleport\n";
  EXPECT_THROW(parse_spec(unknown), ParseError);
}

TEST(Validation, RejectsDenseMismatchAndBadWindow) {
  ArchitectureSpec spec = builtin(Variant::C);
  for (auto& layer : spec.layers)
    if (auto* d = std::get_if<DenseSpec>(&layer)) {
      d->inDim += 1;
      break;
    }
  EXPECT_THROW(validate_spec(spec), std::exception);
  ArchitectureSpec window = builtin(Variant::C);
  window.geometry.windowLen = 30;
  EXPECT_THROW(validate_spec(window), std::exception);
}
