#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "seqcnn/batching.hpp"
#include "support/support.hpp"

using namespace seqcnn;

namespace {

Corpus corpus_of_lengths(const std::vector<std::size_t>& lengths, std::size_t states = 4,
                         std::uint64_t seed = 1) {
  Rng rng(seed);
  Corpus c;
  for (std::size_t i = 0; i < lengths.size(); ++i)
    c.push_back(test::random_utterance(lengths[i], 3, rng, states, "u" + std::to_string(i)));
  return c;
}

// Corpus whose labels follow given class counts, spread over a few utterances.
Corpus corpus_with_counts(const std::vector<std::size_t>& counts) {
  std::vector<std::int32_t> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<std::int32_t>(k));
  Rng rng(2);
  Corpus c;
  const std::size_t per = (labels.size() + 2) / 3;
  for (std::size_t begin = 0; begin < labels.size(); begin += per) {
    const std::size_t n = std::min(per, labels.size() - begin);
    Utterance u = test::random_utterance(n, 2, rng, 0, "c" + std::to_string(begin));
    u.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(begin + n));
    c.push_back(std::move(u));
  }
  return c;
}

}  // namespace

TEST(Balanced, ProbabilitiesFollowPowerLaw) {
  const std::vector<std::uint64_t> f{100, 10, 1};
  const auto p = balanced_probabilities(f, 0.8);
  const double z = std::pow(100.0, 0.8) + std::pow(10.0, 0.8) + 1.0;
  EXPECT_NEAR(p[0], std::pow(100.0, 0.8) / z, 1e-12);
  EXPECT_NEAR(p[1], std::pow(10.0, 0.8) / z, 1e-12);
  EXPECT_NEAR(p[2], 1.0 / z, 1e-12);
  const auto uniform = balanced_probabilities(f, 0.0);
  for (double v : uniform) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  const auto prior = balanced_probabilities(f, 1.0);
  EXPECT_NEAR(prior[0], 100.0 / 111.0, 1e-12);
}

TEST(Balanced, AbsentClassesGetZero) {
  const std::vector<std::uint64_t> f{5, 0, 5};
  const auto p = balanced_probabilities(f, 0.0);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_THROW(balanced_probabilities(std::vector<std::uint64_t>{0, 0}, 0.8), std::invalid_argument);
  EXPECT_THROW(balanced_probabilities(f, -1.0), std::invalid_argument);
}

TEST(Balanced, SamplerFrequenciesMatchProbabilities) {
  const Corpus c = corpus_with_counts({700, 200, 80, 20});
  const BalancedSampler s = BalancedSampler::build(c, 0.8);
  EXPECT_EQ(s.labelled_frames(), 1000u);
  EXPECT_EQ(s.frequencies(), (std::vector<std::uint64_t>{700, 200, 80, 20}));
  Rng rng(3);
  std::vector<double> hits(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const FrameRef r = s.draw(rng);
    ++hits[static_cast<std::size_t>(c[r.utterance].labels[r.frame])];
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(hits[k] / draws, s.probabilities()[k], 0.01);
}

TEST(Balanced, WindowsCarrySourceLabel) {
  const Corpus c = corpus_of_lengths({12, 30, 7});
  const BalancedSampler s = BalancedSampler::build(c, 0.8, 4);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const LabelledWindow w = sample_ce_window(s, c, 3, 2, rng);
    EXPECT_EQ(w.window.shape(), (Shape{6, 3}));
    EXPECT_EQ(w.label, c[w.source.utterance].labels[w.source.frame]);
    const Tensor want = extract_window(c[w.source.utterance].features, w.source.frame, 3, 2);
    EXPECT_TRUE(w.window.identical(want));
  }
}

TEST(Balanced, RejectsUnlabelledCorpus) {
  Rng rng(5);
  Corpus c{test::random_utterance(5, 3, rng)};
  EXPECT_THROW(BalancedSampler::build(c), std::invalid_argument);
}

TEST(UtteranceBatches, TargetLengthDistribution) {
  const Corpus c = corpus_of_lengths({10, 30, 60, 500});
  const auto p = target_length_distribution(c, 100);
  EXPECT_NEAR(p[0], 0.1, 1e-12);
  EXPECT_NEAR(p[1], 0.3, 1e-12);
  EXPECT_NEAR(p[2], 0.6, 1e-12);
  EXPECT_EQ(p[3], 0.0);
  EXPECT_THROW(target_length_distribution(c, 5), std::invalid_argument);
}

TEST(UtteranceBatches, Invariants) {
  Rng lens(6);
  std::vector<std::size_t> lengths;
  for (int i = 0; i < 60; ++i) lengths.push_back(20 + lens.below(200));
  const Corpus c = corpus_of_lengths(lengths);
  BatchAssemblyConfig cfg;
  cfg.numFrames = 600;
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const UtteranceBatch b = assemble_utterance_batch(c, cfg, rng);
    EXPECT_EQ(b.numUtts, cfg.numFrames / b.targUttLen);
    EXPECT_EQ(b.utterances.size(), std::min(b.numUtts, c.size()));
    EXPECT_LE(b.label_frames(), cfg.numFrames);
    std::size_t shortest = SIZE_MAX;
    for (std::size_t s : b.sources) shortest = std::min(shortest, c[s].frames());
    EXPECT_EQ(b.croppedLen, shortest);
    for (std::size_t k = 0; k < b.utterances.size(); ++k) {
      const auto& src = c[b.sources[k]];
      const auto& u = b.utterances[k];
      ASSERT_EQ(u.frames(), b.croppedLen);
      ASSERT_LE(b.offsets[k] + b.croppedLen, src.frames());
      for (std::size_t t = 0; t < u.frames(); ++t) {
        EXPECT_EQ(u.labels[t], src.labels[b.offsets[k] + t]);
        EXPECT_EQ(u.features.get(t * 3), src.features.get((b.offsets[k] + t) * 3));
      }
    }
  }
}

TEST(UtteranceBatches, MembersAreClosestInLength) {
  const Corpus c = corpus_of_lengths({50, 51, 52, 80, 200, 49});
  BatchAssemblyConfig cfg;
  cfg.numFrames = 150;
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const UtteranceBatch b = assemble_utterance_batch(c, cfg, rng);
    std::vector<std::size_t> dist;
    for (std::size_t s : b.sources)
      dist.push_back(c[s].frames() > b.targUttLen ? c[s].frames() - b.targUttLen : b.targUttLen - c[s].frames());
    const std::size_t worst = *std::max_element(dist.begin(), dist.end());
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (std::find(b.sources.begin(), b.sources.end(), i) != b.sources.end() || c[i].frames() > cfg.numFrames) continue;
      const std::size_t d = c[i].frames() > b.targUttLen ? c[i].frames() - b.targUttLen : b.targUttLen - c[i].frames();
      EXPECT_GE(d, worst);
    }
  }
}

TEST(UtteranceBatches, EpochUsesEachUtteranceOnce) {
  const Corpus c = corpus_of_lengths({20, 25, 30, 35, 40, 45, 50, 55, 60, 300});
  BatchAssemblyConfig cfg;
  cfg.numFrames = 100;
  UtteranceBatcher batcher(c, cfg);
  EXPECT_EQ(batcher.eligible(), 9u);
  Rng rng(9);
  std::multiset<std::size_t> used;
  do {
    for (std::size_t s : batcher.next(rng).sources) used.insert(s);
  } while (batcher.remaining() > 0);
  EXPECT_EQ(batcher.epoch(), 1u);
  EXPECT_EQ(used.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(used.count(i), 1u);
  batcher.next(rng);
  EXPECT_EQ(batcher.epoch(), 2u);
}

TEST(UtteranceBatches, InputIsEdgePadded) {
  const Corpus c = corpus_of_lengths({10, 12});
  BatchAssemblyConfig cfg;
  cfg.numFrames = 40;
  Rng rng(10);
  const UtteranceBatch b = assemble_utterance_batch(c, cfg, rng);
  InputGeometry g;
  g.contextRadius = 2;
  g.windowLen = 5;
  g.featDim = 3;
  const Tensor x = utterance_batch_input(b, g, DType::F64);
  EXPECT_EQ(x.shape(), (Shape{b.utterances.size(), 1, b.croppedLen + 4, 3}));
  const Tensor want = pad_utterance(b.utterances[0].features, 2, 2).cast(DType::F64);
  for (std::size_t i = 0; i < want.numel(); ++i) EXPECT_EQ(x.get(i), want.get(i));
  EXPECT_EQ(utterance_batch_labels(b).size(), b.label_frames());
}

TEST(EpochIterator, WindowModeBoundaries) {
  const Corpus c = corpus_of_lengths({30, 45, 25});
  EpochConfig cfg;
  cfg.batchSize = 16;
  cfg.geometry.contextRadius = 1;
  cfg.geometry.windowLen = 3;
  cfg.geometry.featDim = 3;
  cfg.geometry.numStates = 4;
  cfg.seed = 11;
  EpochIterator it(c, cfg);
  EXPECT_EQ(it.batches_per_epoch(), 7u);
  for (int epoch = 1; epoch <= 2; ++epoch) {
    for (int b = 0; b < 7; ++b) {
      auto mb = it.next();
      ASSERT_TRUE(mb.has_value());
      EXPECT_EQ(std::get<WindowBatch>(*mb).labels.size(), 16u);
      EXPECT_EQ(it.epoch(), static_cast<std::size_t>(epoch));
    }
    EXPECT_FALSE(it.next().has_value());
  }
}

TEST(EpochIterator, DeterministicInSeed) {
  const Corpus c = corpus_of_lengths({30, 45, 25, 60});
  EpochConfig cfg;
  cfg.batchSize = 8;
  cfg.geometry.contextRadius = 1;
  cfg.geometry.windowLen = 3;
  cfg.geometry.featDim = 3;
  cfg.geometry.numStates = 4;
  cfg.seed = 12;
  EpochIterator a(c, cfg), b(c, cfg);
  cfg.seed = 13;
  EpochIterator other(c, cfg);
  bool differs = false;
  for (int i = 0; i < 20; ++i) {
    auto x = a.next(), y = b.next(), z = other.next();
    ASSERT_EQ(x.has_value(), y.has_value());
    if (!x || !z) continue;
    const auto& wx = std::get<WindowBatch>(*x);
    const auto& wy = std::get<WindowBatch>(*y);
    EXPECT_TRUE(wx.input.identical(wy.input));
    EXPECT_EQ(wx.labels, wy.labels);
    differs = differs || !wx.input.identical(std::get<WindowBatch>(*z).input);
  }
  EXPECT_TRUE(differs);
}

TEST(EpochIterator, UtteranceModeCoversCorpus) {
  const Corpus c = corpus_of_lengths({20, 22, 24, 26, 28, 30, 32});
  EpochConfig cfg;
  cfg.mode = BatchMode::UtteranceBatches;
  cfg.assembly.numFrames = 60;
  cfg.seed = 14;
  EpochIterator it(c, cfg);
  std::set<std::size_t> seen;
  while (auto mb = it.next()) {
    for (std::size_t s : std::get<UtteranceBatch>(*mb).sources) EXPECT_TRUE(seen.insert(s).second);
  }
  EXPECT_EQ(seen.size(), c.size());
  EXPECT_TRUE(it.next().has_value());
  EXPECT_EQ(it.epoch(), 2u);
}
