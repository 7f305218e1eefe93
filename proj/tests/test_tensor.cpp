#include <gtest/gtest.h>

#include <cstring>

#include "raserec/rng.hpp"
#include "raserec/tensor.hpp"

using namespace raserec;

TEST(Tensor, ShapeDataConsistency) {
  TensorT<float> t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_FLOAT_EQ(t.at(1, 2), 6.0f);
  EXPECT_THROW(TensorT<float>({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, FiniteCheck) {
  TensorT<double> t({3}, {1.0, 2.0, 3.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Parameter, GradMatchesShapeAndZeroes) {
  ParameterT<float> p("w", TensorT<float>::full({4, 2}, 1.5f));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] = 3.0f;
  p.zero_grad();
  for (std::size_t i = 0; i < p.grad.numel(); ++i) EXPECT_EQ(p.grad[i], 0.0f);
}

TEST(Adam, SingleStepMatchesHandComputation) {
  // One Adam step on g=2 from w=1: mhat = g, vhat = g^2, w -= lr*g/(|g|+eps).
  ParameterT<double> p("w", TensorT<double>({1}, {1.0}));
  p.grad[0] = 2.0;
  AdamT<double> adam({&p}, 0.1, 0.9, 0.999, 1e-8);
  adam.step();
  double expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
  EXPECT_NEAR(p.value[0], expected, 1e-12);
  EXPECT_EQ(adam.step_count(), 1u);
}

TEST(Adam, FrozenParameterIsBitwiseUntouched) {
  ParameterT<float> frozen("frozen", TensorT<float>({3}, {0.25f, -1.75f,3.5f}));
  ParameterT<float> live("live", TensorT<float>({3}, {1.0f, 1.0f, 1.0f}));
  frozen.trainable = false;
  std::vector<float> before = frozen.value.vec();

  AdamT<float> adam({&frozen, &live}, 0.01f);
  for (int i = 0; i < 5; ++i) {
    frozen.grad.fill(1.0f);
    live.grad.fill(1.0f);
    adam.step();
  }
  EXPECT_EQ(std::memcmp(before.data(), frozen.value.data(), before.size() * sizeof(float)), 0);
  EXPECT_NE(live.value[0], 1.0f);
}

TEST(Adam, StepCounterStrictlyIncreases) {
  ParameterT<float> p("w", TensorT<float>::zeros({2}));
  AdamT<float> adam({&p}, 0.001f);
  std::uint64_t last = adam.step_count();
  for (int i = 0; i < 4; ++i) {
    adam.step();
    EXPECT_GT(adam.step_count(), last);
    last = adam.step_count();
  }
}

TEST(Rng, SubstreamsAreIndependentAndReproducible) {
  auto a1 = substream(7, "init");
  auto a2 = substream(7, "init");
  auto b = substream(7, "dropout");
  EXPECT_EQ(a1(), a2());
  auto c1 = substream(7, "init");
  auto c2 = substream(8, "init");
  EXPECT_NE(c1(), c2());
  (void)b;
}

TEST(Rng, TruncatedNormalStaysInsideTwoSigma) {
  auto g = substream(123, "init");
  for (int i = 0; i < 20000; ++i) {
    double x = truncated_normal(g, 0.02);
    ASSERT_LE(std::abs(x), 0.04 + 1e-12);
  }
}

TEST(Rng, SampleDistinctReturnsUniqueIndices) {
  auto g = substream(5, "kmeans");
  auto picks = sample_distinct(g, 50, 50);
  std::vector<bool> seen(50, false);
  for (auto i : picks) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
}
