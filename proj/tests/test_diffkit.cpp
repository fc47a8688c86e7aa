#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "five/error.hpp"
#include "five/gradcheck.hpp"
#include "five/kernels.hpp"
#include "five/optim.hpp"
#include "five/param_store.hpp"
#include "five/rng.hpp"
#include "five/tape.hpp"

namespace five {
namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return Tensor::matrix(r, c, std::move(v));
}

class DiffkitTest : public ::testing::Test {
 protected:
  void SetUp() override { set_debug_checks(true); }
  void TearDown() override { set_debug_checks(false); }
};

TEST(Tensor, RejectsNonFiniteAndBadShapes) {
  EXPECT_THROW(Tensor({2}, {1.0, std::nan("")}), NumericError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 2}).item(), ShapeError);
  EXPECT_THROW(Tensor::zeros({3, 2}).slice_rows(2, 4), ShapeError);
}

TEST(Tensor, MatrixViewsAndTranspose) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.transposed().at(2, 1), 6.0);
  EXPECT_EQ(Tensor::row({1, 2}).rows(), 1u);
  EXPECT_EQ(Tensor::scalar(4).item(), 4.0);
  EXPECT_EQ(t.slice_rows(1, 2), Tensor::matrix(1, 3, {4, 5, 6}));
}

TEST(Rng, SubstreamsAreReproducibleAndDistinct) {
  Rng a = Rng::substream(5, 1, 2);
  Rng b = Rng::substream(5, 1, 2);
  Rng c = Rng::substream(5, 2, 1);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(Rng, NormalMoments) {
  Rng rng(42);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  // Mean of n standard normals has sd 1/sqrt(n); allow 4 sd.
  EXPECT_LT(std::abs(mean), 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 4 * std::sqrt(10000.0 * 6 / 7));
}

TEST(Kernels, SerialAndParallelAreBitIdentical) {
  Rng rng(11);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 5, 7}, {64, 33, 17},
                         {129, 64, 65}}) {
    const Tensor a = random_matrix(m, k, rng);
    const Tensor b = random_matrix(k, n, rng);
    const Tensor bt = random_matrix(n, k, rng);
    const Tensor at = random_matrix(k, m, rng);
    std::vector<double> s(m * n), p(m * n);
    kernels::serial::matmul(a.data(), b.data(), s, m, k, n);
    kernels::parallel::matmul(a.data(), b.data(), p, m, k, n);
    EXPECT_EQ(s, p);
    kernels::serial::matmul_nt(a.data(), bt.data(), s, m, k, n);
    kernels::parallel::matmul_nt(a.data(), bt.data(), p, m, k, n);
    EXPECT_EQ(s, p);
    kernels::serial::matmul_tn(at.data(), b.data(), s, m, k, n);
    kernels::parallel::matmul_tn(at.data(), b.data(), p, m, k, n);
    EXPECT_EQ(s, p);
  }
}

TEST(Kernels, MatmulMatchesNaiveLoop) {
  Rng rng(12);
  const Tensor a = random_matrix(4, 6, rng);
  const Tensor b = random_matrix(6, 5, rng);
  std::vector<double> c(20);
  kernels::matmul(a.data(), b.data(), c, 4, 6, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < 6; ++t) acc += a.at(i, t) * b.at(t, j);
      EXPECT_EQ(c[i * 5 + j], acc);
    }
}

TEST_F(DiffkitTest, BackwardRequiresScalar) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_THROW(tape.backward(x), StateError);
}

TEST_F(DiffkitTest, ParamNodeIsSharedAndGradAccumulates) {
  ParamStore ps;
  ps.add("w", Tensor::matrix(1, 2, {1.0, -2.0}));
  Tape tape;
  Var a = tape.param(ps, "w");
  Var b = tape.param(ps, "w");
  EXPECT_EQ(a.id, b.id);
  tape.backward(ops::sum(ops::mul(a, b)));
  EXPECT_EQ(ps.get("w").grad, Tensor::matrix(1, 2, {2.0, -4.0}));
  EXPECT_TRUE(ps.get("w").grad_ready);
}

TEST_F(DiffkitTest, MaskedSoftmaxZerosMaskedEntries) {
  Tape tape;
  Var x = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 1000}));
  Var y = ops::masked_softmax(x, Mask{true, true, false});
  EXPECT_EQ(y.value().at(0, 2), 0.0);
  EXPECT_EQ(y.value().at(1, 2), 0.0);
  EXPECT_NEAR(y.value().at(0, 0) + y.value().at(0, 1), 1.0, 1e-15);
  EXPECT_THROW(ops::masked_softmax(x, Mask{false, false, false}), DegenerateError);
}

TEST_F(DiffkitTest, ShapeErrorsAreRaised) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  EXPECT_THROW(ops::matmul(a, b), ShapeError);
  EXPECT_THROW(ops::add(a, tape.constant(Tensor::zeros({3, 2}))), ShapeError);
}

// Each differentiable op on its own, checked against central differences.
struct OpCase {
  const char* name;
  std::function<Var(Tape&, Var, Var)> build;
};

TEST_F(DiffkitTest, EveryOpMatchesFiniteDifferences) {
  const std::vector<OpCase> cases = {
      {"matmul", [](Tape&, Var a, Var b) { return ops::matmul(a, ops::transpose(b)); }},
      {"add_sub_mul", [](Tape&, Var a, Var b) { return ops::mul(ops::add(a, b), ops::sub(a, b)); }},
      {"scale_exp_tanh", [](Tape&, Var a, Var) { return ops::exp(ops::tanh(ops::scale(a, 0.5))); }},
      {"divide", [](Tape&, Var a, Var b) { return ops::divide_by_scalar(a, ops::exp(ops::sum(ops::scale(b, 0.1)))); }},
      {"add_row", [](Tape&, Var a, Var b) { return ops::add_row(a, ops::mean_rows(b)); }},
      {"clamp", [](Tape&, Var a, Var) { return ops::clamp_min(a, 0.05); }},
      {"masked_mean", [](Tape&, Var a, Var) { return ops::masked_mean_rows(a, Mask{true, false, true}); }},
      {"concat", [](Tape&, Var a, Var b) {
         std::vector<Var> parts{a, b};
         return ops::concat_cols(ops::concat_rows(parts), ops::concat_rows(parts));
       }},
      {"gather", [](Tape&, Var a, Var) {
         std::vector<std::size_t> idx{2, 0, 2};
         return ops::gather_rows(a, idx);
       }},
      {"l2_normalize", [](Tape&, Var a, Var) { return ops::l2_normalize_rows(a); }},
      {"softmax", [](Tape&, Var a, Var) { return ops::softmax_rows(a); }},
      {"masked_softmax", [](Tape&, Var a, Var) { return ops::masked_softmax(a, Mask{true, true, false, true}); }},
      {"attention", [](Tape&, Var a, Var b) { return ops::attention(a, b, ops::scale(b, 0.7), Mask{true, false, true}); }},
      {"embedding_mean", [](Tape&, Var a, Var) { return ops::embedding_mean(a, {{0, 2}, {1}, {2, 2, 0}}); }},
  };
  for (const auto& c : cases) {
    ParamStore ps;
    Rng rng(hash_string(c.name));
    ps.add("a", random_matrix(3, 4, rng));
    ps.add("b", random_matrix(3, 4, rng));
    auto build = [&](Tape& tape, ParamStore& p) {
      Var out = c.build(tape, tape.param(p, "a"), tape.param(p, "b"));
      // Weighted sum with fixed random weights so every output matters.
      Rng wr(7);
      std::vector<double> w(out.value().size());
      for (double& x : w) x = wr.normal();
      return ops::sum(ops::mul(out, tape.constant(Tensor(out.value().shape(), w))));
    };
    const GradReport r = grad_check(build, ps);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.name << " worst " << r.worst;
  }
}

TEST_F(DiffkitTest, SoftCrossEntropyValueAndGradient) {
  ParamStore ps;
  Rng rng(5);
  ps.add("logits", random_matrix(3, 4, rng));
  const Tensor y = Tensor::matrix(3, 4, {0.5, 0.5, 0, 0, 0, 1, 0, 0, 0.25, 0.25, 0.25, 0.25});
  Tape tape;
  const double value = ops::soft_cross_entropy(tape.param(ps, "logits"), y).value().item();
  // Direct evaluation: -(1/N) sum_ij y_ij log softmax_ij.
  const Tensor& l = ps.value("logits");
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mx = std::max(mx, l.at(i, j));
    for (std::size_t j = 0; j < 4; ++j) z += std::exp(l.at(i, j) - mx);
    for (std::size_t j = 0; j < 4; ++j) expected -= y.at(i, j) * (l.at(i, j) - mx - std::log(z));
  }
  EXPECT_NEAR(value, expected / 3.0, 1e-14);
  auto build = [&](Tape& t, ParamStore& p) { return ops::soft_cross_entropy(t.param(p, "logits"), y); };
  EXPECT_LT(grad_check(build, ps).max_rel_error, 1e-7);
}

TEST_F(DiffkitTest, GradCheckDetectsWrongGradient) {
  // An op whose backward is deliberately wrong must be caught.
  ParamStore ps;
  ps.add("x", Tensor::matrix(1, 3, {0.3, -0.2, 0.9}));
  auto build = [](Tape& tape, ParamStore& p) {
    Var x = tape.param(p, "x");
    Var sq = tape.record(Tensor(x.value().shape(),
                                std::vector<double>{x.value()[0] * x.value()[0], x.value()[1] * x.value()[1],
                                                    x.value()[2] * x.value()[2]}),
                         {x.id}, [x](Tape& t, const Tensor& g) {
                           std::vector<double> wrong(g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) wrong[i] = g[i] * x.value()[i];  // missing 2x
                           t.accumulate(x.id, wrong);
                         });
    return ops::sum(sq);
  };
  EXPECT_FALSE(grad_check(build, ps).passed(1e-4));
}

TEST_F(DiffkitTest, FrozenParametersGetNoUpdate) {
  ParamStore ps;
  ps.add("a", Tensor::matrix(1, 2, {1, 2}));
  ps.add("b", Tensor::matrix(1, 2, {3, 4}), false);
  Tape tape;
  tape.backward(ops::sum(ops::mul(tape.param(ps, "a"), tape.param(ps, "b"))));
  const Tensor before = ps.value("b");
  adamw_step(ps, AdamWConfig{0.1, 0.9, 0.98, 1e-8, 0.1});
  EXPECT_EQ(ps.value("b"), before);
  EXPECT_NE(ps.value("a"), Tensor::matrix(1, 2, {1, 2}));
}

TEST_F(DiffkitTest, AdamWRejectsStaleGradients) {
  ParamStore ps;
  ps.add("a", Tensor::matrix(1, 1, {1.0}));
  EXPECT_THROW(adamw_step(ps, AdamWConfig{}), StateError);
  Tape tape;
  tape.backward(ops::sum(tape.param(ps, "a")));
  EXPECT_NO_THROW(adamw_step(ps, AdamWConfig{}));
  EXPECT_THROW(adamw_step(ps, AdamWConfig{}), StateError);
}

TEST_F(DiffkitTest, AdamWFirstStepMatchesHandComputation) {
  // Step 1: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
  // after decoupled decay theta * (1 - lr * wd).
  ParamStore ps;
  ps.add("a", Tensor::matrix(1, 2, {0.5, -1.5}));
  Tape tape;
  tape.backward(ops::sum(ops::scale(tape.param(ps, "a"), 3.0)));
  const AdamWConfig cfg{0.01, 0.9, 0.98, 1e-8, 0.1};
  adamw_step(ps, cfg);
  const double decay = 1.0 - 0.01 * 0.1;
  EXPECT_NEAR(ps.value("a")[0], 0.5 * decay - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(ps.value("a")[1], -1.5 * decay - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
}

TEST_F(DiffkitTest, ZeroLearningRateLeavesValuesBitIdentical) {
  ParamStore ps;
  Rng rng(9);
  ps.add("a", random_matrix(4, 3, rng));
  const auto before = ps.snapshot();
  for (int step = 0; step < 25; ++step) {
    Tape tape;
    Var a = tape.param(ps, "a");
    tape.backward(ops::sum(ops::exp(ops::tanh(a))));
    adamw_step(ps, AdamWConfig{0.0, 0.9, 0.98, 1e-8, 1e-4});
  }
  EXPECT_EQ(ps.snapshot(), before);
}

TEST(WarmupLr, LinearRampThenConstant) {
  // 10% of 50 steps: 5 warmup steps.
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 0, 50, 0.1), 0.2);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 4, 50, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 5, 50, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 49, 50, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(warmup_lr(2.0, 0, 50, 0.0), 2.0);
  // ceil(0.1 * 7) = 1 step of warmup.
  EXPECT_DOUBLE_EQ(warmup_lr(1.0, 0, 7, 0.1), 1.0);
}

TEST(ParamStore, SetTrainableOnlyAndSnapshots) {
  ParamStore ps;
  ps.add("x", Tensor::zeros({1, 2}));
  ps.add("y", Tensor::zeros({1, 2}));
  ps.set_trainable_only({"y"});
  EXPECT_FALSE(ps.get("x").requires_grad);
  EXPECT_TRUE(ps.get("y").requires_grad);
  auto snap = ps.snapshot();
  ps.set_value("x", Tensor::filled({1, 2}, 3.0));
  ps.restore(snap);
  EXPECT_EQ(ps.value("x"), Tensor::zeros({1, 2}));
  EXPECT_THROW(ps.set_value("x", Tensor::zeros({2, 2})), ShapeError);
  EXPECT_THROW(ps.add("x", Tensor::zeros({1})), StateError);
  EXPECT_THROW(ps.get("nope"), StateError);
  EXPECT_EQ(ps.names(), (std::vector<std::string>{"x", "y"}));
}

}  // namespace
}  // namespace five
