#include <gtest/gtest.h>

#include "seqcnn/cost.hpp"
#include "support/support.hpp"

using namespace seqcnn;

namespace {

ArchitectureSpec variant(Variant v, Rational ws = {1, 16}) { return build_builtin(v, 40, 8, ws); }

ArchitectureSpec single_conv(std::size_t outC) {
  ArchitectureSpec spec;
  spec.geometry.contextRadius = 11;
  spec.geometry.windowLen = 23;
  spec.geometry.featDim = 40;
  ConvConfig c;
  c.outChannels = outC;
  c.padFreq = 1;
  spec.layers.emplace_back(c);
  return spec;
}

std::uint64_t tally_forward(const Network& net, std::size_t inputTime) {
  const auto& g = net.spec().geometry;
  ScopedMacTally tally;
  net.predict(Tensor({1, 1, inputTime, g.featDim}, net.dtype()));
  return tally.macs();
}

}  // namespace

TEST(CountMacs, ConvExample) {
  const CostReport r = count_macs(single_conv(4), 23);
  ASSERT_EQ(r.perLayer.size(), 1u);
  EXPECT_EQ(r.perLayer[0].macs, 30240u);
  EXPECT_EQ(r.totalMacs, 30240u);
  EXPECT_EQ(count_macs(single_conv(8), 23).totalMacs, 2u * 30240u);
}

TEST(CountMacs, DenseExample) {
  ArchitectureSpec spec;
  spec.geometry.contextRadius = 0;
  spec.geometry.windowLen = 1;
  spec.geometry.featDim = 10;
  spec.geometry.numStates = 5;
  spec.layers.emplace_back(FlattenSpec{});
  spec.layers.emplace_back(DenseSpec{10, 5});
  EXPECT_EQ(count_macs(spec, 1).totalMacs, 50u);
}

TEST(CountMacs, TotalsAreSums) {
  const CostReport r = count_macs(variant(Variant::C), 23);
  std::uint64_t macs = 0, ops = 0;
  for (const auto& l : r.perLayer) {
    macs += l.macs;
    ops += l.elementwiseOps;
    if (l.kind != LayerKind::Conv && l.kind != LayerKind::Dense) EXPECT_EQ(l.macs, 0u);
  }
  EXPECT_EQ(r.totalMacs, macs);
  EXPECT_EQ(r.totalElementwiseOps, ops);
  EXPECT_GT(ops, 0u);
}

TEST(CountMacs, MatchesInstrumentedForwardOnRandomSpecs) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = test::random_spec(rng);
    const Network net = Network::create(spec, DType::F32, trial);
    EXPECT_EQ(tally_forward(net, spec.geometry.windowLen), count_macs(spec, spec.geometry.windowLen).totalMacs)
        << "trial " << trial;
  }
}

TEST(CountMacs, MatchesInstrumentedForwardOnBuiltins) {
  for (const Variant v : {Variant::A, Variant::B, Variant::C}) {
    const auto spec = variant(v);
    const Network net = Network::create(spec, DType::F32, 1);
    EXPECT_EQ(tally_forward(net, spec.geometry.windowLen), count_macs(spec, spec.geometry.windowLen).totalMacs);
  }
  const Network c = Network::create(variant(Variant::C), DType::F32, 1);
  EXPECT_EQ(tally_forward(c, 200), count_macs(variant(Variant::C), 200).totalMacs);
}

TEST(CompareCosts, SingleFrameRatioIsOne) {
  const auto r = compare_eval_costs(variant(Variant::C), 1);
  EXPECT_EQ(r.splicedMacs, r.convMacs);
  EXPECT_EQ(r.ratio, 1.0);
}

TEST(CompareCosts, RatioIsMonotoneInLength) {
  const auto spec = variant(Variant::C);
  double prev = 0.0;
  for (std::size_t len = 1; len <= 1000; ++len) {
    const double ratio = compare_eval_costs(spec, len).ratio;
    ASSERT_GE(ratio, prev) << "uttLen " << len;
    prev = ratio;
  }
}

// Brute-force oracle: tally the MACs both evaluators actually perform.
TEST(CompareCosts, MatchesInstrumentedEvaluators) {
  Rng rng(2);
  const auto spec = variant(Variant::C);
  const Network net = Network::create(spec, DType::F32, 3);
  const Utterance u = test::random_utterance(500, 40, rng);
  std::uint64_t spliced = 0, conv = 0;
  {
    ScopedMacTally tally;
    evaluate_spliced(net, u);
    spliced = tally.macs();
  }
  {
    ScopedMacTally tally;
    evaluate_convolutional(net, u);
    conv = tally.macs();
  }
  const auto r = compare_eval_costs(spec, 500);
  EXPECT_EQ(r.splicedMacs, spliced);
  EXPECT_EQ(r.convMacs, conv);
  EXPECT_NEAR(r.inputFrameRatio, 500.0 * 23.0 / 522.0, 1e-12);
  EXPECT_NEAR(r.inputFrameRatio, 22.03, 0.005);
  // The MAC ratio stays well below the input duplication factor: upper
  // layers of a window pass already work on few frames.
  EXPECT_GT(r.ratio, 1.0);
  EXPECT_LT(r.ratio, r.inputFrameRatio);
}

TEST(CompareCosts, RejectsNonStreamable) {
  EXPECT_THROW(compare_eval_costs(variant(Variant::B), 100), NotStreamableError);
  EXPECT_NO_THROW(eval_cost(variant(Variant::B), 100, EvalMode::Spliced));
}

TEST(EvalMode, Names) {
  EXPECT_EQ(parse_eval_mode("conv"), EvalMode::Convolutional);
  EXPECT_EQ(parse_eval_mode("spliced"), EvalMode::Spliced);
  EXPECT_EQ(to_string(EvalMode::Convolutional), "conv");
  EXPECT_THROW(parse_eval_mode("dense"), std::invalid_argument);
}

TEST(Reports, KeyValueAndTable) {
  const CostReport r = eval_cost(variant(Variant::C), 100, EvalMode::Convolutional);
  const std::string kv = format_cost_keyvalue(r);
  EXPECT_NE(kv.find("total_macs = " + std::to_string(r.totalMacs)), std::string::npos);
  EXPECT_NE(kv.find("[layer 0]"), std::string::npos);
  EXPECT_NE(kv.find("mode = conv"), std::string::npos);
  EXPECT_NE(format_cost_table(r).find("utterance length 100"), std::string::npos);
}

TEST(Benchmark, MeasuresBothModes) {
  Rng rng(3);
  const Network net = Network::create(variant(Variant::C), DType::F32, 1);
  const std::vector<Utterance> utts{test::random_utterance(100, 40, rng)};
  BenchmarkOptions opts;
  opts.warmup = 1;
  opts.repetitions = 3;
  const BenchmarkResult s = benchmark_eval(net, utts, EvalMode::Spliced, opts);
  const BenchmarkResult c = benchmark_eval(net, utts, EvalMode::Convolutional, opts);
  EXPECT_EQ(s.seconds.size(), 3u);
  EXPECT_EQ(s.framesPerRepetition, 100u);
  EXPECT_GT(s.framesPerSecond, 0.0);
  EXPECT_GT(c.framesPerSecond, s.framesPerSecond);
  opts.threads = 2;
  EXPECT_EQ(benchmark_eval(net, {utts[0], utts[0]}, EvalMode::Convolutional, opts).threads, 2u);
}

TEST(Benchmark, SplicedThroughputIndependentOfLength) {
  Rng rng(4);
  const Network net = Network::create(variant(Variant::C, {1, 8}), DType::F32, 1);
  BenchmarkOptions opts;
  opts.warmup = 1;
  opts.repetitions = 5;
  const double shortFps = benchmark_eval(net, {test::random_utterance(100, 40, rng)}, EvalMode::Spliced, opts).framesPerSecond;
  const double longFps = benchmark_eval(net, {test::random_utterance(500, 40, rng)}, EvalMode::Spliced, opts).framesPerSecond;
  EXPECT_NEAR(shortFps / longFps, 1.0, 0.2);
}

TEST(Benchmark, OrderingFollowsMacsFromFiftyFrames) {
  Rng rng(5);
  const Network net = Network::create(variant(Variant::C, {1, 8}), DType::F32, 1);
  BenchmarkOptions opts;
  opts.warmup = 1;
  opts.repetitions = 5;
  for (std::size_t len : {50, 200}) {
    const std::vector<Utterance> utts{test::random_utterance(len, 40, rng)};
    EXPECT_GT(benchmark_eval(net, utts, EvalMode::Convolutional, opts).framesPerSecond,
              benchmark_eval(net, utts, EvalMode::Spliced, opts).framesPerSecond)
        << "uttLen " << len;
  }
}
