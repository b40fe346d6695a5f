#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "mars/digest.hpp"
#include "mars/error.hpp"
#include "mars/layers.hpp"
#include "mars/optim.hpp"
#include "mars/rng.hpp"
#include "mars/tensor.hpp"

using namespace mars;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
  Tensor2 t(r, c);
  for (double& x : t.data()) x = rng.normal(0.0, sd);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor2 t(2, 3, 1.5);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  t(1, 2) = 4.0;
  EXPECT_EQ(t.row(1)[2], 4.0);
  EXPECT_EQ(t.col(2), (std::vector<double>{1.5, 4.0}));
  EXPECT_THROW(Tensor2(2, 2, std::vector<double>{1.0, 2.0, 3.0}), InputError);
}

TEST(Tensor, DotAndAxpy) {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  EXPECT_EQ(dot(a, b), 32.0);
  EXPECT_EQ(squared_norm(a), 14.0);
  std::vector<double> y{1, 1, 1};
  axpy(2.0, a, y);
  EXPECT_EQ(y, (std::vector<double>{3, 5, 7}));
  EXPECT_THROW(dot(a, std::vector<double>{1.0}), InputError);
}

TEST(Tensor, AllFiniteDetectsNan) {
  Tensor2 t(2, 2, 0.0);
  EXPECT_TRUE(t.all_finite());
  t(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, DerivedStreamsDiffer) {
  Rng a = Rng::derived(7, 1), b = Rng::derived(7, 2), c = Rng::derived(7, 1);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_TRUE(Rng::derived(7, 1) == c);
}

TEST(Rng, UniformIndexInRangeAndCoversAll) {
  Rng rng(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.uniform_index(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int count : seen) EXPECT_GT(count, 800);
  EXPECT_THROW(rng.uniform_index(0), InputError);
}

TEST(Rng, Uniform01AndNormalMoments) {
  Rng rng(9);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal(2.0, 3.0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 2.0, 0.05);
  EXPECT_NEAR(var, 9.0, 0.15);
}

TEST(Rng, StateRoundTrip) {
  Rng a(77);
  a.next_u64();
  Rng b;
  b.set_state(a.state());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_THROW(b.set_state("not a state"), CorruptionError);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  Rng rng(3);
  std::vector<int> pool(20);
  std::iota(pool.begin(), pool.end(), 0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto s = rng.sample_without_replacement(std::span<const int>(pool), 6);
    ASSERT_EQ(s.size(), 6u);
    EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), 6u);
  }
  EXPECT_EQ(rng.sample_without_replacement(std::span<const int>(pool), 50).size(), 20u);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(to_hex(sha256(std::string_view(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Softmax, MatchesDirectExponentials) {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  const auto y = softmax(x);
  EXPECT_NEAR(y[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(y[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(y[2], std::exp(3.0) / z, 1e-15);
  EXPECT_NEAR(y[0], 0.09003057, 1e-8);
  EXPECT_NEAR(y[1], 0.24472847, 1e-8);
  EXPECT_NEAR(y[2], 0.66524096, 1e-8);
}

TEST(Softmax, StableForLargeInputs) {
  const auto y = softmax(std::vector<double>{1000.0, 1001.0});
  EXPECT_TRUE(std::isfinite(y[0]) && std::isfinite(y[1]));
  EXPECT_NEAR(y[1], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_THROW(softmax(std::vector<double>{}), InputError);
}

TEST(Softmax, SingleElementIsOne) { EXPECT_EQ(softmax(std::vector<double>{-3.7})[0], 1.0); }

TEST(Softmax, BackwardMatchesJacobian) {
  const std::vector<double> x{0.3, -1.2, 2.0, 0.5};
  const std::vector<double> dy{1.0, -0.5, 0.25, 2.0};
  const auto y = softmax(x);
  const auto dx = softmax_backward(y, dy);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double expect = 0;
    for (std::size_t j = 0; j < x.size(); ++j) expect += dy[j] * y[j] * ((i == j ? 1.0 : 0.0) - y[i]);
    EXPECT_NEAR(dx[i], expect, 1e-15);
  }
}

TEST(Sigmoid, LogSigmoidAnchors) {
  EXPECT_NEAR(log_sigmoid(0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(log_sigmoid(-1000.0), -1000.0, 1e-12);
  EXPECT_LE(log_sigmoid(1000.0), 0.0);
  EXPECT_GT(log_sigmoid(1000.0), -1e-300);
  for (double x : {-5.0, -0.5, 0.7, 4.0}) EXPECT_NEAR(log_sigmoid(x), std::log(1.0 / (1.0 + std::exp(-x))), 1e-14);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
}

TEST(Embedding, LookupCopiesColumns) {
  Tensor2 emb(2, 4);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 4; ++c) emb(r, c) = 10.0 * r + c;
  const std::vector<TokenIndex> idx{3, 1, 3};
  const Tensor2 pi = embed_lookup(idx, emb);
  ASSERT_EQ(pi.rows(), 2u);
  ASSERT_EQ(pi.cols(), 3u);
  EXPECT_EQ(pi(0, 0), 3.0);
  EXPECT_EQ(pi(1, 1), 11.0);
  EXPECT_EQ(pi(1, 2), 13.0);
  EXPECT_THROW(embed_lookup(std::vector<TokenIndex>{4}, emb), InputError);
}

TEST(Embedding, BackwardScatterAddsAndFreezesPad) {
  const std::vector<TokenIndex> idx{2, 0, 2};
  Tensor2 d_pi(1, 3);
  d_pi(0, 0) = 1.0;
  d_pi(0, 1) = 5.0;
  d_pi(0, 2) = 2.0;
  Tensor2 d_emb(1, 3);
  embed_lookup_backward(idx, d_pi, d_emb, true);
  EXPECT_EQ(d_emb(0, 2), 3.0);
  EXPECT_EQ(d_emb(0, kPadIndex), 0.0);
  Tensor2 d_free(1, 3);
  embed_lookup_backward(idx, d_pi, d_free, false);
  EXPECT_EQ(d_free(0, kPadIndex), 5.0);
}

TEST(Conv, MatchesScalarLoopOracle) {
  Rng rng(11);
  const std::size_t e = 3, n = 7, c = 3;
  const Tensor2 pi = random_tensor(e, n, rng);
  const Tensor2 kernel = random_tensor(e, c, rng);
  const double bias = 0.1;
  const auto z = conv1d_valid(pi, kernel, bias);
  ASSERT_EQ(z.size(), n - c + 1);
  for (std::size_t t = 0; t + c <= n; ++t) {
    double acc = bias;
    for (std::size_t r = 0; r < e; ++r)
      for (std::size_t k = 0; k < c; ++k) acc += kernel(r, k) * pi(r, t + k);
    EXPECT_NEAR(z[t], acc > 0 ? acc : 0.0, 1e-14);
  }
  EXPECT_THROW(conv1d_valid(Tensor2(e, 2), kernel, 0.0), InputError);
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  const std::size_t e = 2, n = 6, c = 2;
  Tensor2 pi = random_tensor(e, n, rng);
  Tensor2 kernel = random_tensor(e, c, rng);
  double bias = 0.05;
  const std::vector<double> weights{0.3, -1.1, 0.7, 2.0, -0.4};
  auto loss = [&] {
    const auto z = conv1d_valid(pi, kernel, bias);
    double s = 0;
    for (std::size_t t = 0; t < z.size(); ++t) s += weights[t] * z[t];
    return s;
  };
  const auto z = conv1d_valid(pi, kernel, bias);
  Tensor2 d_pi(e, n), d_kernel(e, c);
  double d_bias = 0;
  conv1d_valid_backward(pi, kernel.data(), c, z, weights, &d_pi, d_kernel.data(), d_bias);
  const double h = 1e-6;
  auto numeric = [&](double& x) {
    const double orig = x;
    x = orig + h;
    const double p = loss();
    x = orig - h;
    const double m = loss();
    x = orig;
    return (p - m) / (2 * h);
  };
  for (std::size_t k = 0; k < pi.size(); ++k) EXPECT_NEAR(d_pi.data()[k], numeric(pi.data()[k]), 1e-7);
  for (std::size_t k = 0; k < kernel.size(); ++k) EXPECT_NEAR(d_kernel.data()[k], numeric(kernel.data()[k]), 1e-7);
  EXPECT_NEAR(d_bias, numeric(bias), 1e-7);
}

TEST(MaxPool, FirstMaximumWins) {
  const auto r = maxpool(std::vector<double>{0.5, 2.0, -1.0, 2.0});
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.index, 1u);
  EXPECT_EQ(maxpool_backward(4, 1, 3.0), (std::vector<double>{0, 3.0, 0, 0}));
}

TEST(Dense, MatchesOracleAndGradient) {
  Rng rng(13);
  Tensor2 w = random_tensor(3, 4, rng, 0.5);
  std::vector<double> s{0.2, -0.3, 0.9, 0.1};
  double b = 0.05;
  const auto out = dense_tanh(s, w, b);
  for (std::size_t k = 0; k < 3; ++k) {
    double acc = b;
    for (std::size_t j = 0; j < 4; ++j) acc += w(k, j) * s[j];
    EXPECT_NEAR(out[k], std::tanh(acc), 1e-15);
  }
  const std::vector<double> d_out{1.0, -2.0, 0.5};
  std::vector<double> d_s(4, 0.0);
  Tensor2 d_w(3, 4);
  double d_b = 0;
  dense_tanh_backward(s, w, out, d_out, d_s, d_w, d_b);
  auto loss = [&] {
    const auto o = dense_tanh(s, w, b);
    return dot(o, d_out);
  };
  const double h = 1e-6;
  auto numeric = [&](double& x) {
    const double orig = x;
    x = orig + h;
    const double p = loss();
    x = orig - h;
    const double m = loss();
    x = orig;
    return (p - m) / (2 * h);
  };
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(d_s[j], numeric(s[j]), 1e-8);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(d_w.data()[k], numeric(w.data()[k]), 1e-8);
  EXPECT_NEAR(d_b, numeric(b), 1e-8);
}

TEST(Rmsprop, SingleStepMatchesFormula) {
  std::vector<Tensor2> params{Tensor2(1, 2, std::vector<double>{1.0, -2.0})};
  GradTape grads(params);
  grads[0](0, 0) = 0.5;
  grads[0](0, 1) = -3.0;
  RmspropState state(params, {});
  rmsprop_step(params, grads, state);
  for (std::size_t k = 0; k < 2; ++k) {
    const double g = k == 0 ? 0.5 : -3.0;
    const double acc = 0.1 * g * g;
    const double before = k == 0 ? 1.0 : -2.0;
    EXPECT_DOUBLE_EQ(state.accumulators[0].data()[k], acc);
    EXPECT_NEAR(params[0].data()[k], before - 0.001 * g / (std::sqrt(acc) + 1e-8), 1e-16);
  }
  // a second step decays the accumulator
  rmsprop_step(params, grads, state);
  EXPECT_DOUBLE_EQ(state.accumulators[0](0, 0), 0.9 * 0.025 + 0.1 * 0.25);
}

TEST(Rmsprop, ZeroLearningRateLeavesParametersUnchanged) {
  Rng rng(1);
  std::vector<Tensor2> params{random_tensor(3, 3, rng)};
  const auto before = params;
  GradTape grads(params);
  for (double& g : grads[0].data()) g = rng.normal();
  RmspropState state(params, {0.0, 0.9, 1e-8});
  rmsprop_step(params, grads, state);
  EXPECT_EQ(params, before);
}

TEST(Rmsprop, NonFiniteGradientNamesParameter) {
  std::vector<Tensor2> params{Tensor2(1, 1, 0.0)};
  GradTape grads(params);
  grads[0](0, 0) = std::numeric_limits<double>::infinity();
  RmspropState state(params, {});
  const std::vector<std::string> names{"item.dense"};
  try {
    rmsprop_step(params, grads, state, names);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("item.dense"), std::string::npos);
  }
}

TEST(GradCheck, RelativeErrorFormula) {
  EXPECT_DOUBLE_EQ(gradient_relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(gradient_relative_error(1.0, 3.0), 0.5);
  EXPECT_DOUBLE_EQ(gradient_relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradient_relative_error(1e-9, 0.0), 1e-9 / 1e-8);
}

TEST(GradCheck, QuadraticPassesAndRestoresValues) {
  Rng rng(2);
  Tensor2 x = random_tensor(2, 3, rng);
  const Tensor2 original = x;
  Tensor2 analytic(2, 3);
  for (std::size_t k = 0; k < x.size(); ++k) analytic.data()[k] = 2.0 * x.data()[k];
  const std::vector<GradProbeTarget> targets{{"x", &x, &analytic}};
  const auto r = finite_diff_check([&] { return squared_norm(x.data()); }, targets, 20, 1e-5, rng);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.probes, 20u);
  EXPECT_EQ(x, original);
}

TEST(GradCheck, WrongGradientIsDetected) {
  Rng rng(3);
  Tensor2 x = random_tensor(1, 4, rng);
  Tensor2 wrong(1, 4, 0.0);
  const std::vector<GradProbeTarget> targets{{"x", &x, &wrong}};
  const auto r = finite_diff_check([&] { return squared_norm(x.data()); }, targets, 8, 1e-5, rng);
  EXPECT_GT(r.max_rel_error, 0.5);
}

TEST(GradCheck, FrozenColumnIsNeverProbed) {
  Rng rng(4);
  Tensor2 x(2, 3, 0.0);
  Tensor2 analytic(2, 3, 0.0);
  // A loss that depends on column 0 only through a kink would fail if probed.
  auto loss = [&] { return std::abs(x(0, 0)) + std::abs(x(1, 0)); };
  GradProbeTarget t{"x", &x, &analytic, 0};
  const auto r = finite_diff_check(loss, std::span<const GradProbeTarget>(&t, 1), 50, 1e-5, rng);
  EXPECT_EQ(r.max_rel_error, 0.0);
}

TEST(GradTape, MergeAndScale) {
  std::vector<Tensor2> params{Tensor2(1, 2)};
  GradTape a(params), b(params);
  a[0](0, 0) = 1.0;
  b[0](0, 0) = 2.0;
  b[0](0, 1) = 4.0;
  a.merge(b);
  a.scale(0.5);
  EXPECT_EQ(a[0](0, 0), 1.5);
  EXPECT_EQ(a[0](0, 1), 2.0);
  a.zero();
  EXPECT_EQ(a[0](0, 1), 0.0);
  EXPECT_TRUE(a.matches(params));
}
