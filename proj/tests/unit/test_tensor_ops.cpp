#include <gtest/gtest.h>

#include <cmath>

#include "support/support.hpp"

using namespace seqcnn;
using test::random_tensor;

namespace {

// Direct quadruple loop over the cross-correlation definition.
Tensor naive_conv(const Tensor& x, const ConvParams& p) {
  const auto& c = p.config;
  const std::size_t n = x.dim(0), inT = x.dim(2), inF = x.dim(3);
  const std::size_t outT = (inT + 2 * c.padTime - c.kernelTime) / c.strideTime + 1;
  const std::size_t outF = (inF + 2 * c.padFreq - c.kernelFreq) / c.strideFreq + 1;
  Tensor y({n, c.outChannels, outT, outF}, DType::F64);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < c.outChannels; ++o)
      for (std::size_t t = 0; t < outT; ++t)
        for (std::size_t f = 0; f < outF; ++f) {
          double acc = c.bias ? p.bias.get(o) : 0.0;
          for (std::size_t i = 0; i < c.inChannels; ++i)
            for (std::size_t kt = 0; kt < c.kernelTime; ++kt)
              for (std::size_t kf = 0; kf < c.kernelFreq; ++kf) {
                const long it = static_cast<long>(t * c.strideTime + kt) - static_cast<long>(c.padTime);
                const long jf = static_cast<long>(f * c.strideFreq + kf) - static_cast<long>(c.padFreq);
                if (it < 0 || jf < 0 || it >= static_cast<long>(inT) || jf >= static_cast<long>(inF)) continue;
                acc += p.weights.get(((o * c.inChannels + i) * c.kernelTime + kt) * c.kernelFreq + kf) *
                       x.get(((s * c.inChannels + i) * inT + it) * inF + jf);
              }
          y.set(((s * c.outChannels + o) * outT + t) * outF + f, acc);
        }
  return y;
}

ConvConfig random_conv(Rng& rng) {
  ConvConfig c;
  c.inChannels = 1 + rng.below(4);
  c.outChannels = 1 + rng.below(5);
  c.kernelTime = 1 + rng.below(4);
  c.kernelFreq = 1 + rng.below(4);
  c.padTime = rng.below(c.kernelTime);
  c.padFreq = rng.below(c.kernelFreq);
  c.strideTime = 1 + rng.below(2);
  c.strideFreq = 1 + rng.below(3);
  c.bias = rng.below(2) == 0;
  return c;
}

}  // namespace

TEST(Tensor, ConstructionAndAccess) {
  Tensor t({2, 3}, DType::F64);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  t.set(4, 2.5);
  EXPECT_EQ(t.get(4), 2.5);
  EXPECT_THROW(t.values<float>(), ShapeError);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).dim(0), 3u);
}

TEST(Tensor, CastRoundTripAndIdentity) {
  Rng rng(3);
  const Tensor a = random_tensor({4, 5}, rng, DType::F32);
  const Tensor b = a.cast(DType::F64).cast(DType::F32);
  EXPECT_TRUE(a.identical(b));
  Tensor c = b;
  c.set(0, c.get(0) + 1.0);
  EXPECT_FALSE(a.identical(c));
  EXPECT_FALSE(a.identical(a.cast(DType::F64)));
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::filled({3}, 1.0, DType::F32);
  EXPECT_TRUE(t.all_finite());
  t.set(1, std::nan(""));
  EXPECT_FALSE(t.all_finite());
}

TEST(Conv, MatchesNaiveLoopOverRandomConfigs) {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const ConvConfig cfg = random_conv(rng);
    ConvParams p = ConvParams::zeros(cfg, DType::F64);
    p.weights = random_tensor(p.weights.shape(), rng);
    if (cfg.bias) p.bias = random_tensor(p.bias.shape(), rng);
    const std::size_t inT = cfg.kernelTime + rng.below(7);
    const std::size_t inF = cfg.kernelFreq + rng.below(9);
    const Tensor x = random_tensor({1 + rng.below(3), cfg.inChannels, inT, inF}, rng);
    const Tensor y = conv2d_forward(x, p);
    const Tensor ref = naive_conv(x, p);
    ASSERT_EQ(y.shape(), ref.shape()) << "trial " << trial;
    EXPECT_LT(test::max_abs_diff(y, ref), 1e-12) << "trial " << trial;
  }
}

TEST(Conv, SpecExampleExtent) {
  ConvConfig cfg;
  cfg.outChannels = 4;
  cfg.padFreq = 1;
  const Tensor y = conv2d_forward(Tensor({1, 1, 23, 40}, DType::F32), ConvParams::zeros(cfg, DType::F32));
  EXPECT_EQ(y.shape(), (Shape{1, 4, 21, 40}));
}

TEST(Conv, RejectsBadShapes) {
  ConvConfig cfg;
  cfg.inChannels = 2;
  const ConvParams p = ConvParams::zeros(cfg, DType::F64);
  EXPECT_THROW(conv2d_forward(Tensor({1, 1, 5, 5}, DType::F64), p), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 2, 5}, DType::F64), p), ShapeError);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 5, 5}, DType::F32), p), ShapeError);
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvConfig cfg = random_conv(rng);
    const Shape in{2, cfg.inChannels, cfg.kernelTime + rng.below(4), cfg.kernelFreq + rng.below(5)};
    test::ConvLoss loss(cfg, in, rng);
    const GradCheckReport rep = grad_check(loss);
    EXPECT_TRUE(rep.pass) << "trial " << trial << ": " << rep.failure << " max " << rep.maxRelError;
  }
}

TEST(Pool, ForwardPicksWindowMaximum) {
  const std::vector<double> v{1, 5, 2, 3, 9, 0, 4, 4, 7, 1, 8, 6};
  const Tensor x = Tensor::from_values({1, 1, 2, 6}, v, DType::F64);
  const PoolResult r = maxpool2d_forward(x, PoolConfig{1, 2, 1, 2});
  EXPECT_EQ(r.output.to_vector(), (std::vector<double>{5, 3, 9, 4, 7, 8}));
  const PoolResult r2 = maxpool2d_forward(x, PoolConfig{2, 3, 1, 3});
  EXPECT_EQ(r2.output.to_vector(), (std::vector<double>{7, 9}));
}

TEST(Pool, BackwardRoutesToArgmax) {
  const std::vector<double> v{1, 5, 2, 3};
  const Tensor x = Tensor::from_values({1, 1, 1, 4}, v, DType::F64);
  const PoolResult r = maxpool2d_forward(x, PoolConfig{1, 2, 1, 2});
  const Tensor g = maxpool2d_backward(r.argmax, Tensor::from_values({1, 1, 1, 2}, std::vector<double>{10, 20}, DType::F64));
  EXPECT_EQ(g.to_vector(), (std::vector<double>{0, 10, 0, 20}));
}

TEST(Pool, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    PoolConfig cfg{1 + rng.below(2), 1 + rng.below(3), 1, 1};
    cfg.strideTime = cfg.kernelTime;
    cfg.strideFreq = 1 + rng.below(cfg.kernelFreq);
    test::PoolLoss loss(cfg, {2, 2, 4 + rng.below(3), 6 + rng.below(4)}, rng);
    EXPECT_TRUE(grad_check(loss).pass) << "trial " << trial;
  }
}

TEST(Dense, ForwardAndGradients) {
  Rng rng(7);
  DenseParams p = DenseParams::zeros(10, 5, DType::F64);
  p.weights = random_tensor(p.weights.shape(), rng);
  p.bias = random_tensor(p.bias.shape(), rng);
  const Tensor x = random_tensor({3, 10}, rng);
  const Tensor y = dense_forward(x, p);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t o = 0; o < 5; ++o) {
      double acc = p.bias.get(o);
      for (std::size_t i = 0; i < 10; ++i) acc += p.weights.get(o * 10 + i) * x.get(r * 10 + i);
      EXPECT_NEAR(y.get(r * 5 + o), acc, 1e-12);
    }
  test::DenseLoss loss(4, 7, 3, rng);
  EXPECT_TRUE(grad_check(loss).pass);
}

TEST(Relu, ForwardAndBackward) {
  const Tensor x = Tensor::from_values({4}, std::vector<double>{-1, 0, 2, -3}, DType::F64);
  EXPECT_EQ(relu(x).to_vector(), (std::vector<double>{0, 0, 2, 0}));
  const Tensor g = relu_backward(x, Tensor::filled({4}, 1.0, DType::F64));
  EXPECT_EQ(g.to_vector(), (std::vector<double>{0, 0, 1, 0}));
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(8);
  const Tensor z = random_tensor({6, 9}, rng, DType::F64, 30.0);
  const Tensor p = softmax_rows(z);
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 9; ++c) sum += p.get(r * 9 + c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  for (double v : p.to_vector()) EXPECT_GE(v, 0.0);
}

TEST(CrossEntropy, ValueAndGradient) {
  const Tensor z = Tensor::from_values({2, 3}, std::vector<double>{1, 2, 3, 0, 0, 0}, DType::F64);
  const std::vector<std::int32_t> y{2, 0};
  const CrossEntropyResult r = cross_entropy_from_logits(z, y);
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  EXPECT_NEAR(r.meanLoss, 0.5 * ((lse - 3.0) + std::log(3.0)), 1e-12);
  const Tensor p = softmax_rows(z);
  EXPECT_NEAR(r.gradLogits.get(2), 0.5 * (p.get(2) - 1.0), 1e-12);
  EXPECT_NEAR(r.gradLogits.get(4), 0.5 * p.get(4), 1e-12);
  const CrossEntropyResult r2 = cross_entropy(p, y);
  EXPECT_NEAR(r2.meanLoss, r.meanLoss, 1e-12);
  EXPECT_LT(test::max_abs_diff(r2.gradLogits, r.gradLogits), 1e-12);
}

TEST(CrossEntropy, RejectsOutOfRangeLabels) {
  const Tensor z({2, 3}, DType::F64);
  const std::vector<std::int32_t> bad{0, 3};
  EXPECT_THROW(cross_entropy_from_logits(z, bad), std::out_of_range);
}

TEST(CrossEntropy, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  test::SoftmaxCrossEntropyLoss loss(5, 4, rng);
  EXPECT_TRUE(grad_check(loss).pass);
}

TEST(MacTally, CountsConvAndDenseWork) {
  ConvConfig cfg;
  cfg.outChannels = 4;
  cfg.padFreq = 1;
  ScopedMacTally tally;
  conv2d_forward(Tensor({1, 1, 23, 40}, DType::F32), ConvParams::zeros(cfg, DType::F32));
  EXPECT_EQ(tally.macs(), 30240u);
  {
    ScopedMacTally inner;
    dense_forward(Tensor({1, 10}, DType::F32), DenseParams::zeros(10, 5, DType::F32));
    EXPECT_EQ(inner.macs(), 50u);
  }
  EXPECT_EQ(tally.macs(), 30240u);
}

TEST(Axpy, AddsScaledTensor) {
  Tensor y = Tensor::filled({3}, 1.0, DType::F64);
  axpy_inplace(y, 2.0, Tensor::filled({3}, 0.5, DType::F64));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{2, 2, 2}));
  EXPECT_THROW(axpy_inplace(y, 1.0, Tensor({2}, DType::F64)), ShapeError);
}
