#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <numeric>

#include "scnn/adam.hpp"
#include "scnn/errors.hpp"
#include "scnn/kernels.hpp"
#include "scnn/ops.hpp"
#include "scnn/tape.hpp"
#include "test_support.hpp"

using namespace scnn;
using scnn::testing::check_gradients;
using scnn::testing::max_fd_error;
using scnn::testing::random_tensor;

namespace {

std::vector<double> iota_values(std::size_t n, double start = 1.0) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), start);
  return v;
}

}  // namespace

// ----------------------------------------------------------------- Tensor

TEST(Tensor, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, GradMatchesValueShapeWhenPresent) {
  Tensor t({4, 2});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.size());
  t.grad()[3] = 2.0;
  t.zero_grad();
  EXPECT_EQ(t.grad()[3], 0.0);
}

TEST(Tensor, ReshapeKeepsValues) {
  Tensor t({2, 3}, iota_values(6));
  t.reshape({3, 2});
  EXPECT_EQ(t.dim(0), 3u);
  EXPECT_EQ(t[5], 6.0);
  EXPECT_THROW(t.reshape({4, 2}), ShapeError);
}

// -------------------------------------------------------------------- Rng

TEST(Rng, EngineMatchesStandardReferenceValue) {
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.uniform_index(7), b.uniform_index(7));
  }
}

TEST(Rng, ForkDependsOnSeedAndTagOnly) {
  Rng a(9);
  const Rng before = a.fork("x");
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng after = a.fork("x");
  Rng copy = before;
  EXPECT_EQ(copy.next_u64(), after.next_u64());
  EXPECT_NE(Rng(9).fork("x").seed(), Rng(9).fork("y").seed());
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(3);
  double s = 0, s2 = 0, n = 0, n2 = 0;
  const int count = 100000;
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
    const double z = rng.normal();
    n += z;
    n2 += z * z;
  }
  EXPECT_NEAR(s / count, 0.5, 0.01);
  EXPECT_NEAR(s2 / count - 0.25, 1.0 / 12.0, 0.01);
  EXPECT_NEAR(n / count, 0.0, 0.02);
  EXPECT_NEAR(n2 / count, 1.0, 0.02);
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng rng(5);
  std::vector<int> hits(6, 0);
  for (int i = 0; i < 60000; ++i) ++hits[rng.uniform_index(6)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, CanonicalFirstLayerShape) {
  const Tensor out = ops::conv2d_valid(Tensor({224, 224, 3}), Tensor({3, 3, 3, 16}), Tensor({16}));
  EXPECT_EQ(out.shape(), (Shape{222, 222, 16}));
}

TEST(Conv2d, ZeroInputGivesZeroOutput) {
  const Tensor out = ops::conv2d_valid(Tensor({5, 5, 1}), random_tensor({3, 3, 1, 1}, 1), Tensor({1}));
  EXPECT_EQ(out.shape(), (Shape{3, 3, 1}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, WindowSumsOfOneToNine) {
  const Tensor in({3, 3, 1}, iota_values(9));
  const Tensor out = ops::conv2d_valid(in, Tensor({2, 2, 1, 1}, 1.0), Tensor({1}));
  // Hand-expanded window sums.
  const double expected[4] = {1 + 2 + 4 + 5, 2 + 3 + 5 + 6, 4 + 5 + 7 + 8, 5 + 6 + 8 + 9};
  ASSERT_EQ(out.shape(), (Shape{2, 2, 1}));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(out[i], expected[i]);
  EXPECT_EQ(out[0], 12.0);
  EXPECT_EQ(out[3], 28.0);
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(ops::conv2d_valid(Tensor({5, 5, 2}), Tensor({3, 3, 1, 4}), Tensor({4})), ShapeError);
  EXPECT_THROW(ops::conv2d_valid(Tensor({2, 5, 1}), Tensor({3, 3, 1, 4}), Tensor({4})), ShapeError);
  EXPECT_THROW(ops::conv2d_valid(Tensor({5, 5, 1}), Tensor({3, 3, 1, 4}), Tensor({3})), ShapeError);
}

// --------------------------------------------------------------- maxpool

TEST(MaxPool, FloorSemantics) {
  EXPECT_EQ(ops::maxpool2d(Tensor({109, 109, 32})).shape(), (Shape{54, 54, 32}));
}

TEST(MaxPool, MaxOfFour) {
  const Tensor out = ops::maxpool2d(Tensor({2, 2, 1}, {1, 2, 3, 4}));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], 4.0);
}

TEST(MaxPool, FourByFourOneToSixteen) {
  const Tensor in({4, 4, 1}, iota_values(16));
  const Tensor out = ops::maxpool2d(in);
  // Brute-force window maxima.
  std::vector<double> expected;
  for (std::size_t wy = 0; wy < 2; ++wy)
    for (std::size_t wx = 0; wx < 2; ++wx) {
      double m = -1e300;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, in.at(2 * wy + dy, 2 * wx + dx, 0));
      expected.push_back(m);
    }
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), expected);
  EXPECT_EQ(expected, (std::vector<double>{6, 8, 14, 16}));
}

TEST(MaxPool, RejectsInputSmallerThanWindow) {
  EXPECT_THROW(ops::maxpool2d(Tensor({1, 4, 1})), ShapeError);
}

TEST(MaxPool, GradientRoutesToArgmaxAndConservesSum) {
  Tensor x = random_tensor({6, 5, 3}, 11);
  Tape tape;
  auto v = tape.parameter(x, true);
  auto p = tape.maxpool2x2(v);
  const Tensor probe = random_tensor(tape.value(p).shape(), 12);
  tape.backward(tape.weighted_sum(p, probe));
  double routed = 0.0, incoming = 0.0;
  std::size_t nonzero = 0;
  for (double g : x.grad()) {
    routed += g;
    nonzero += g != 0.0;
  }
  for (double g : probe.values()) incoming += g;
  EXPECT_NEAR(routed, incoming, 1e-12);
  EXPECT_EQ(nonzero, probe.size());
  // The trailing odd column receives nothing.
  for (std::size_t yy = 0; yy < 6; ++yy)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(x.grad()[(yy * 5 + 4) * 3 + c], 0.0);
}

// ----------------------------------------------------------------- dense

TEST(Dense, CanonicalHiddenShape) {
  EXPECT_EQ(ops::dense(Tensor({6400}), Tensor({6400, 100}), Tensor({100})).shape(), (Shape{100}));
}

TEST(Dense, IdentityWeights) {
  const Tensor out = ops::dense(Tensor({3}, {1, 2, 3}), Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), (std::vector<double>{1, 2, 3}));
}

TEST(Dense, SmallAffine) {
  const Tensor out = ops::dense(Tensor({2}, {1, 1}), Tensor({2, 1}, {2, 3}), Tensor({1}, {1}));
  EXPECT_EQ(out[0], 6.0);
}

TEST(Dense, ShapeMismatch) {
  EXPECT_THROW(ops::dense(Tensor({3}), Tensor({2, 4}), Tensor({4})), ShapeError);
  EXPECT_THROW(ops::dense(Tensor({2}), Tensor({2, 4}), Tensor({3})), ShapeError);
}

// ------------------------------------------------------------------ relu

TEST(Relu, Examples) {
  const Tensor out = ops::relu(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(out.values().begin(), out.values().end()), (std::vector<double>{0, 0, 2}));
  const Tensor neg = ops::relu(Tensor({4}, {-1, -2, -0.5, -9}));
  for (double v : neg.values()) EXPECT_EQ(v, 0.0);
  const Tensor pos = random_tensor({10}, 4, 0.1, 2.0);
  EXPECT_TRUE(ops::relu(pos).same_values(pos));
}

// --------------------------------------------------------------- softmax

TEST(Softmax, Uniform) {
  const Tensor out = ops::softmax(Tensor({3}));
  for (double v : out.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor out = ops::softmax(Tensor({2}, {1000, 0}));
  EXPECT_TRUE(out.all_finite());
  EXPECT_NEAR(out[0], 1.0, 1e-12);
  EXPECT_NEAR(out[1], 0.0, 1e-12);
}

TEST(Softmax, LogOfOneTwoThree) {
  const Tensor out = ops::softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  // e^{ln k} / (1 + 2 + 3)
  EXPECT_NEAR(out[0], 1.0 / 6.0, 1e-12);
  EXPECT_NEAR(out[1], 2.0 / 6.0, 1e-12);
  EXPECT_NEAR(out[2], 3.0 / 6.0, 1e-12);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = random_tensor({9}, seed, -20, 20);
    const Tensor p = ops::softmax(x);
    double sum = 0;
    for (double v : p.values()) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (auto& v : x.values()) v += 123.456;
    const Tensor q = ops::softmax(x);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
  }
}

// --------------------------------------------------------------- dropout

TEST(Dropout, RateZeroIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({50}, 2);
  EXPECT_TRUE(ops::dropout(x, 0.0, rng, true).same_values(x));
}

TEST(Dropout, InferenceIsIdentity) {
  Rng rng(1);
  const Tensor x = random_tensor({50}, 2);
  EXPECT_TRUE(ops::dropout(x, 0.3, rng, false).same_values(x));
}

TEST(Dropout, SurvivorFractionAndScale) {
  Rng rng(2024);
  const Tensor out = ops::dropout(Tensor({10000}, 1.0), 0.3, rng, true);
  std::size_t survivors = 0;
  for (double v : out.values()) {
    if (v != 0.0) {
      ++survivors;
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
    }
  }
  EXPECT_NEAR(static_cast<double>(survivors) / 10000.0, 0.7, 0.02);
}

TEST(Dropout, RateOutOfRange) {
  Rng rng(1);
  EXPECT_THROW(ops::dropout(Tensor({3}), 1.0, rng, true), ConfigError);
  EXPECT_THROW(ops::dropout(Tensor({3}), -0.1, rng, true), ConfigError);
}

TEST(Dropout, SameSeedSameMask) {
  Rng a(8), b(8);
  const auto m1 = ops::make_dropout_mask(1000, 0.3, a);
  const auto m2 = ops::make_dropout_mask(1000, 0.3, b);
  EXPECT_EQ(m1.keep, m2.keep);
}

// ---------------------------------------------------------- cross-entropy

TEST(CrossEntropy, PerfectPrediction) {
  EXPECT_LE(ops::cross_entropy(ops::one_hot(4, 2), ops::one_hot(4, 2)), 1e-9);
}

TEST(CrossEntropy, UniformOverNine) {
  EXPECT_NEAR(ops::cross_entropy(Tensor({9}, 1.0 / 9.0), ops::one_hot(9, 5)), std::log(9.0), 1e-12);
  EXPECT_NEAR(std::log(9.0), 2.1972, 1e-4);
}

TEST(CrossEntropy, DirectEvaluation) {
  const double ce = ops::cross_entropy(Tensor({3}, {0.7, 0.2, 0.1}), ops::one_hot(3, 0));
  EXPECT_NEAR(ce, -std::log(0.7), 1e-15);
  EXPECT_NEAR(ce, 0.3567, 1e-4);
}

TEST(CrossEntropy, LengthMismatch) {
  EXPECT_THROW(ops::cross_entropy(Tensor({3}, 1.0 / 3), ops::one_hot(4, 0)), ShapeError);
}

TEST(CrossEntropy, ZeroProbabilityIsClamped) {
  const double ce = ops::cross_entropy(Tensor({2}, {1.0, 0.0}), ops::one_hot(2, 1));
  EXPECT_NEAR(ce, -std::log(1e-12), 1e-9);
}

// ------------------------------------------------------- backward / tape

TEST(Backward, SoftmaxCrossEntropyGivesPMinusTarget) {
  Tensor logits({2}, {0.3, -1.2});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor zero({2});
  Tape tape;
  auto x = tape.parameter(logits, true);
  auto z = tape.dense(x, tape.parameter(eye), tape.parameter(zero));
  auto p = tape.softmax(z);
  const Tensor target = ops::one_hot(2, 1);
  tape.backward(tape.cross_entropy(p, target));
  const Tensor probs = ops::softmax(logits);
  EXPECT_NEAR(logits.grad()[0], probs[0] - 0.0, 1e-12);
  EXPECT_NEAR(logits.grad()[1], probs[1] - 1.0, 1e-12);
}

TEST(Backward, WithoutForwardThrows) {
  Tape tape;
  EXPECT_THROW(tape.backward(Tape::Var{}), std::logic_error);
}

TEST(Backward, FrozenTensorGetsNoGradient) {
  Tensor x = random_tensor({4, 4, 2}, 1);
  Tensor k = random_tensor({3, 3, 2, 3}, 2);
  Tensor b = random_tensor({3}, 3);
  Tape tape;
  auto y = tape.conv2d(tape.parameter(x, false), tape.parameter(k, false), tape.parameter(b, true));
  tape.backward(tape.weighted_sum(y, random_tensor(tape.value(y).shape(), 4)));
  EXPECT_FALSE(x.has_grad());
  EXPECT_FALSE(k.has_grad());
  EXPECT_TRUE(b.has_grad());
}

TEST(Backward, GradientsAccumulateAcrossPasses) {
  Tensor w = random_tensor({3, 2}, 1);
  Tensor b = random_tensor({2}, 2);
  const Tensor x = random_tensor({3}, 3);
  const Tensor probe = random_tensor({2}, 4);
  Tape tape;
  for (int pass = 0; pass < 2; ++pass) {
    tape.clear();
    auto y = tape.dense(tape.input(x), tape.parameter(w, true), tape.parameter(b, true));
    tape.backward(tape.weighted_sum(y, probe));
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(w.grad()[i * 2 + j], 2.0 * x[i] * probe[j], 1e-12);
}

TEST(GradientCheck, Conv) {
  Tensor x = random_tensor({7, 6, 3}, 1), k = random_tensor({3, 3, 3, 4}, 2), b = random_tensor({4}, 3);
  EXPECT_LE(check_gradients({&x, &k, &b},
                            [](Tape& t, const auto& v) { return t.conv2d(v[0], v[1], v[2]); }),
            1e-4);
}

TEST(GradientCheck, ConvManyFilters) {
  Tensor x = random_tensor({6, 6, 5}, 4), k = random_tensor({2, 2, 5, 17}, 5), b = random_tensor({17}, 6);
  EXPECT_LE(check_gradients({&x, &k, &b},
                            [](Tape& t, const auto& v) { return t.conv2d(v[0], v[1], v[2]); }),
            1e-4);
}

TEST(GradientCheck, Pool) {
  Tensor x = random_tensor({7, 6, 3}, 7);
  EXPECT_LE(check_gradients({&x}, [](Tape& t, const auto& v) { return t.maxpool2x2(v[0]); }), 1e-4);
}

TEST(GradientCheck, Dense) {
  Tensor x = random_tensor({12}, 8), w = random_tensor({12, 5}, 9), b = random_tensor({5}, 10);
  EXPECT_LE(check_gradients({&x, &w, &b}, [](Tape& t, const auto& v) { return t.dense(v[0], v[1], v[2]); }),
            1e-4);
}

TEST(GradientCheck, Relu) {
  Tensor x = random_tensor({40}, 11);
  for (auto& v : x.values())
    if (std::abs(v) < 1e-2) v = 0.5;
  EXPECT_LE(check_gradients({&x}, [](Tape& t, const auto& v) { return t.relu(v[0]); }), 1e-4);
}

TEST(GradientCheck, Softmax) {
  Tensor x = random_tensor({6}, 12, -3, 3);
  EXPECT_LE(check_gradients({&x}, [](Tape& t, const auto& v) { return t.softmax(v[0]); }), 1e-4);
}

TEST(GradientCheck, DropoutFixedMask) {
  Tensor x = random_tensor({30}, 13);
  Rng rng(14);
  const auto mask = ops::make_dropout_mask(30, 0.3, rng);
  EXPECT_LE(check_gradients({&x}, [&](Tape& t, const auto& v) { return t.dropout(v[0], mask); }), 1e-4);
}

TEST(GradientCheck, CrossEntropy) {
  Tensor x = random_tensor({5}, 15, 0.05, 1.0);
  const Tensor target = ops::one_hot(5, 3);
  EXPECT_LE(check_gradients({&x}, [&](Tape& t, const auto& v) { return t.cross_entropy(v[0], target); }), 1e-4);
}

TEST(GradientCheck, MicroNetWithStepOneThousandth) {
  Tensor x = random_tensor({6, 6, 2}, 16);
  Tensor k = random_tensor({3, 3, 2, 3}, 17, -0.5, 0.5), b = random_tensor({3}, 18, -0.1, 0.1);
  Tensor w = random_tensor({48, 3}, 19, -0.3, 0.3), c = random_tensor({3}, 20, -0.1, 0.1);
  const Tensor target = ops::one_hot(3, 1);
  auto build = [&](Tape& t, const auto& v) {
    auto h = t.flatten(t.relu(t.conv2d(t.input(x), v[0], v[1])));
    return t.cross_entropy(t.softmax(t.dense(h, v[2], v[3])), target);
  };
  EXPECT_LE(check_gradients({&k, &b, &w, &c}, build, 1e-3), 1e-4);
}

// ---------------------------------------------------- parallel kernels

namespace {

void expect_close(std::span<const double> a, std::span<const double> b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_LE(std::abs(a[i] - b[i]), 1e-11 * (1.0 + std::abs(b[i]))) << "element " << i;
  }
}

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed) {
  const Tensor t = random_tensor({n}, seed);
  return {t.values().begin(), t.values().end()};
}

}  // namespace

class ConvKernelAgreement : public ::testing::TestWithParam<kernels::ConvGeometry> {};

TEST_P(ConvKernelAgreement, ParallelMatchesReference) {
  const auto g = GetParam();
  const auto in = rand_vec(g.input_size(), 1), k = rand_vec(g.kernel_size(), 2), b = rand_vec(g.filters, 3);
  const auto dy = rand_vec(g.output_size(), 4);
  std::vector<double> y_ref(g.output_size()), y_par(g.output_size());
  kernels::reference::conv2d_forward(g, in, k, b, y_ref);
  kernels::parallel::conv2d_forward(g, in, k, b, y_par);
  expect_close(y_par, y_ref);

  std::vector<double> dx_ref(g.input_size(), 0.5), dx_par(g.input_size(), 0.5);
  kernels::reference::conv2d_backward_input(g, k, dy, dx_ref);
  kernels::parallel::conv2d_backward_input(g, k, dy, dx_par);
  expect_close(dx_par, dx_ref);

  std::vector<double> dk_ref(g.kernel_size(), 0.25), dk_par(g.kernel_size(), 0.25);
  std::vector<double> db_ref(g.filters, 1.0), db_par(g.filters, 1.0);
  kernels::reference::conv2d_backward_params(g, in, dy, dk_ref, db_ref);
  kernels::parallel::conv2d_backward_params(g, in, dy, dk_par, db_par);
  expect_close(dk_par, dk_ref);
  expect_close(db_par, db_ref);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvKernelAgreement,
                         ::testing::Values(kernels::ConvGeometry{5, 5, 1, 3, 1}, kernels::ConvGeometry{9, 7, 3, 3, 16},
                                           kernels::ConvGeometry{13, 11, 2, 2, 8},
                                           kernels::ConvGeometry{10, 12, 5, 4, 4},
                                           kernels::ConvGeometry{8, 8, 4, 3, 3},
                                           kernels::ConvGeometry{20, 19, 16, 3, 32},
                                           kernels::ConvGeometry{12, 12, 64, 3, 64},
                                           kernels::ConvGeometry{6, 30, 3, 1, 17},
                                           kernels::ConvGeometry{30, 6, 7, 5, 24}));

TEST(DenseKernels, ParallelMatchesReference) {
  for (auto [n, m] : {std::pair<std::size_t, std::size_t>{7, 3}, {100, 9}, {6400, 100}, {72, 33}}) {
    const auto x = rand_vec(n, 1), w = rand_vec(n * m, 2), b = rand_vec(m, 3), dy = rand_vec(m, 4);
    std::vector<double> y1(m), y2(m), dx1(n, 1.0), dx2(n, 1.0), dw1(n * m, 0.5), dw2(n * m, 0.5), db1(m), db2(m);
    kernels::reference::dense_forward(n, m, x, w, b, y1);
    kernels::parallel::dense_forward(n, m, x, w, b, y2);
    expect_close(y2, y1);
    kernels::reference::dense_backward_input(n, m, w, dy, dx1);
    kernels::parallel::dense_backward_input(n, m, w, dy, dx2);
    expect_close(dx2, dx1);
    kernels::reference::dense_backward_params(n, m, x, dy, dw1, db1);
    kernels::parallel::dense_backward_params(n, m, x, dy, dw2, db2);
    expect_close(dw2, dw1);
    expect_close(db2, db1);
  }
}

TEST(PoolKernels, ParallelMatchesReferenceExactly) {
  const kernels::PoolGeometry g{27, 30, 8};
  const auto in = rand_vec(g.height * g.width * g.channels, 5);
  std::vector<double> y1(g.output_size()), y2(g.output_size());
  std::vector<std::uint32_t> a1(g.output_size()), a2(g.output_size());
  kernels::reference::maxpool2x2_forward(g, in, y1, a1);
  kernels::parallel::maxpool2x2_forward(g, in, y2, a2);
  EXPECT_EQ(y1, y2);
  EXPECT_EQ(a1, a2);
}

TEST(ParallelKernels, ResultsIndependentOfThreadCount) {
  const kernels::ConvGeometry g{54, 54, 32, 3, 64};
  const auto in = rand_vec(g.input_size(), 1), k = rand_vec(g.kernel_size(), 2), b = rand_vec(g.filters, 3);
  const auto dy = rand_vec(g.output_size(), 4);
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> y(g.output_size()), dx(g.input_size()), dk(g.kernel_size()), db(g.filters);
    kernels::parallel::conv2d_forward(g, in, k, b, y);
    kernels::parallel::conv2d_backward_input(g, k, dy, dx);
    kernels::parallel::conv2d_backward_params(g, in, dy, dk, db);
    y.insert(y.end(), dx.begin(), dx.end());
    y.insert(y.end(), dk.begin(), dk.end());
    y.insert(y.end(), db.begin(), db.end());
    return y;
  };
  const int saved = omp_get_max_threads();
  const auto one = run(1);
  const auto three = run(3);
  omp_set_num_threads(saved);
  EXPECT_EQ(one, three);
}

// ---------------------------------------------------------- shape algebra

TEST(ShapeAlgebra, RandomChainsMatchClosedForm) {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t h = 8 + rng.uniform_index(40), w = 8 + rng.uniform_index(40), c = 1 + rng.uniform_index(4);
    Tensor x({h, w, c});
    for (int step = 0; step < 4; ++step) {
      if (rng.uniform() < 0.5) {
        const std::size_t k = 1 + rng.uniform_index(3), f = 1 + rng.uniform_index(5);
        if (h < k || w < k) break;
        x = ops::conv2d_valid(x, Tensor({k, k, c, f}), Tensor({f}));
        h = h - k + 1, w = w - k + 1, c = f;
      } else {
        if (h < 2 || w < 2) break;
        x = ops::maxpool2d(x);
        h /= 2, w /= 2;
      }
      ASSERT_EQ(x.shape(), (Shape{h, w, c}));
    }
  }
}

// ------------------------------------------------------------------- Adam

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = random_tensor({5}, 1);
  const Tensor before = p;
  std::vector<double> g(5, 0.0);
  const std::vector<Shape> shapes{p.shape()};
  AdamState state(shapes);
  const AdamTarget targets[] = {{p.values(), g, true}};
  adam_step(targets, state, 0.1);
  EXPECT_TRUE(p.same_values(before));
  EXPECT_EQ(state.step(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Tensor p({4}, {0.0, 0.0, 0.0, 0.0});
  std::vector<double> g{3.0, -0.01, 250.0, -7.0};
  const std::vector<Shape> shapes{p.shape()};
  AdamState state(shapes);
  const AdamTarget targets[] = {{p.values(), g, true}};
  adam_step(targets, state, 1e-3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], -1e-3 * (g[i] > 0 ? 1 : -1), 1e-8);
}

TEST(Adam, QuadraticConvergesFromOne) {
  Tensor x({1}, {1.0});
  const std::vector<Shape> shapes{x.shape()};
  AdamState state(shapes);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> g{2.0 * x[0]};
    const AdamTarget targets[] = {{x.values(), g, true}};
    adam_step(targets, state, 0.1);
  }
  EXPECT_LT(std::abs(x[0]), 0.1);
  // Independent scalar run of the same update rule.
  EXPECT_NEAR(x[0], 0.002936669580802721, 1e-12);
  EXPECT_EQ(state.step(), 100u);
}

TEST(Adam, ShapeMismatchAndFrozenTargets) {
  Tensor p({3}, 1.0), q({2}, 1.0);
  std::vector<double> gp(3, 1.0), gq(2, 1.0);
  const std::vector<Shape> shapes{p.shape(), q.shape()};
  AdamState state(shapes);
  const AdamTarget bad[] = {{p.values(), gp, true}};
  EXPECT_THROW(adam_step(bad, state, 0.1), ShapeError);
  const AdamTarget mixed[] = {{p.values(), gp, true}, {q.values(), {}, false}};
  adam_step(mixed, state, 0.1);
  EXPECT_NE(p[0], 1.0);
  EXPECT_EQ(q[0], 1.0);
  EXPECT_EQ(state.second_moment(1)[0], 0.0);
  const AdamTarget wrong_grad[] = {{p.values(), gq, true}, {q.values(), {}, false}};
  EXPECT_THROW(adam_step(wrong_grad, state, 0.1), ShapeError);
}
