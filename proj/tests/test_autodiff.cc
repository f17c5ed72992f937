// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "memescope/autodiff.h"
#include "memescope/error.h"
#include "test_util.h"

namespace memescope {
namespace {

using testing::random_tensor;
using testing::weighted_sum;

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_EQ(Tensor::vector({1, 2}).shape(), (std::vector<std::size_t>{2}));
}

TEST(Matmul, IdentityAndAnnihilation) {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(matmul(eye, m).value(), Tensor::matrix({{1, 2}, {3, 4}}));
  Var a = tape.constant(Tensor::matrix({{1, 0}, {0, 0}}));
  Var b = tape.constant(Tensor::matrix({{0}, {5}}));
  EXPECT_EQ(matmul(a, b).value(), Tensor::matrix({{0}, {0}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({3, 4}));
  Var b = tape.constant(Tensor({3, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[3x4]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 2}, rng);
  auto wrt_a = grad_check([&](Tape& t, const Var& x) {
    return weighted_sum(t, matmul(x, t.constant(b)), 1);
  }, a);
  auto wrt_b = grad_check([&](Tape& t, const Var& x) {
    return weighted_sum(t, matmul(t.constant(a), x), 1);
  }, b);
  EXPECT_LE(wrt_a.max_relative_error, 1e-6);
  EXPECT_LE(wrt_b.max_relative_error, 1e-6);
  EXPECT_EQ(wrt_a.coordinates_checked, 12u);
}

TEST(Softmax, ClosedForms) {
  Tape tape;
  auto row = [&](std::vector<double> v) {
    return softmax(tape.constant(Tensor({1, v.size()}, v)), 1).value();
  };
  Tensor half = row({0, 0});
  EXPECT_DOUBLE_EQ(half[0], 0.5);
  EXPECT_DOUBLE_EQ(half[1], 0.5);
  Tensor big = row({1000, 1000});
  EXPECT_DOUBLE_EQ(big[0], 0.5);
  EXPECT_DOUBLE_EQ(big[1], 0.5);
  Tensor q = row({0, std::log(3.0)});
  EXPECT_NEAR(q[0], 0.25, 1e-15);
  EXPECT_NEAR(q[1], 0.75, 1e-15);
}

TEST(Softmax, SlicesSumToOneAndGradientsSumToZero) {
  std::mt19937_64 rng(2);
  for (std::size_t axis : {0u, 1u}) {
    Tape tape;
    Var x = tape.leaf(random_tensor({5, 7}, rng, 3.0), true);
    Var y = softmax(x, axis);
    const Tensor& v = y.value();
    for (std::size_t i = 0; i < (axis == 1 ? 5u : 7u); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < (axis == 1 ? 7u : 5u); ++j) {
        const double p = axis == 1 ? v.at(i, j) : v.at(j, i);
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    tape.backward(weighted_sum(tape, y, 9));
    const Tensor g = x.grad();
    for (std::size_t i = 0; i < (axis == 1 ? 5u : 7u); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < (axis == 1 ? 7u : 5u); ++j) {
        s += axis == 1 ? g.at(i, j) : g.at(j, i);
      }
      EXPECT_NEAR(s, 0.0, 1e-10);
    }
  }
}

TEST(LayerNorm, ClosedForms) {
  Tape tape;
  Var gamma = tape.constant(Tensor::vector({1, 1}));
  Var beta = tape.constant(Tensor::vector({0, 0}));
  Tensor flat = layer_norm(tape.constant(Tensor::matrix({{4, 4}})), gamma, beta, 1e-5).value();
  EXPECT_EQ(flat[0], 0.0);
  EXPECT_EQ(flat[1], 0.0);
  Tensor pm = layer_norm(tape.constant(Tensor::matrix({{1, 3}})), gamma, beta, 1e-14).value();
  EXPECT_NEAR(pm[0], -1.0, 1e-12);
  EXPECT_NEAR(pm[1], 1.0, 1e-12);
}

TEST(LayerNorm, MismatchedGammaThrows) {
  Tape tape;
  Var x = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(layer_norm(x, tape.constant(Tensor({2})), tape.constant(Tensor({3})), 1e-5),
               ShapeError);
}

TEST(LayerNorm, RandomInputGradientCheck) {
  std::mt19937_64 rng(3);
  const Tensor gamma = random_tensor({6}, rng);
  const Tensor beta = random_tensor({6}, rng);
  auto r = grad_check([&](Tape& t, const Var& x) {
    return weighted_sum(t, layer_norm(x, t.constant(gamma), t.constant(beta), 1e-5), 4);
  }, random_tensor({4, 6}, rng));
  EXPECT_LE(r.max_relative_error, 1e-5);
}

TEST(Elementwise, Examples) {
  Tape tape;
  EXPECT_EQ(gelu(tape.constant(Tensor::scalar(0.0))).value().item(), 0.0);

  Var table = tape.leaf(Tensor::matrix({{1, 1}, {2, 2}, {3, 3}}), true);
  const std::size_t ids[] = {2, 2};
  Var rows = embedding_lookup(table, ids);
  tape.backward(sum(rows));
  EXPECT_EQ(table.grad(), Tensor::matrix({{0, 0}, {0, 0}, {2, 2}}));

  Tape t2;
  Var x = t2.leaf(Tensor::vector({1, 2, 3}), true);
  t2.backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), Tensor::vector({2, 4, 6}));
}

TEST(EmbeddingLookup, OutOfRangeIsIndexError) {
  Tape tape;
  Var table = tape.constant(Tensor({3, 2}));
  const std::size_t ids[] = {3};
  EXPECT_THROW(embedding_lookup(table, ids), IndexError);
}

TEST(Backward, ScalarExamples) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0), true);
  tape.backward(mul(x, x));
  EXPECT_EQ(x.grad().item(), 6.0);

  Tape t2;
  Var y = t2.leaf(Tensor::scalar(3.0), true);
  Var c = t2.constant(Tensor::scalar(7.0));
  Var out = add(c, scale(y, 0.0));
  t2.backward(out);
  EXPECT_EQ(y.grad().item(), 0.0);
}

TEST(Backward, NonScalarOutputIsContractError) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}, 1.0), true);
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, EveryLeafGetsAGradientOfItsShape) {
  Tape tape;
  Var used = tape.leaf(Tensor({2, 3}, 1.0), true);
  Var unused = tape.leaf(Tensor({4}, 1.0), true);
  tape.backward(sum(used));
  EXPECT_EQ(used.grad().shape(), (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(unused.grad(), Tensor({4}, 0.0));
}

TEST(Backward, ReusedLeafAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(2.0), true);
  tape.backward(add(scale(x, 3.0), scale(x, 4.0)));
  EXPECT_EQ(x.grad().item(), 7.0);
}

TEST(Backward, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tape tape;
    Var x = tape.leaf(random_tensor({4, 5}, rng), true);
    Var w = tape.leaf(random_tensor({5, 3}, rng), true);
    Var y = gelu(matmul(x, w));
    tape.backward(weighted_sum(tape, softmax(y, 1), 2));
    return std::make_pair(x.grad(), w.grad());
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, LinearAndCubic) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({7}, rng);
  auto linear = grad_check([](Tape& t, const Var& v) { return weighted_sum(t, v, 3); }, x);
  EXPECT_LE(linear.max_relative_error, 1e-10);
  // sum(a x^3 + b x^2 + c x)
  auto cubic = grad_check([](Tape& t, const Var& v) {
    Var sq = mul(v, v);
    Var cu = mul(sq, v);
    return add(add(weighted_sum(t, cu, 1), weighted_sum(t, sq, 2)), weighted_sum(t, v, 3));
  }, x);
  EXPECT_LE(cubic.max_relative_error, 1e-6);
}

// Every differentiable primitive, 100 seeds, central differences at 1e-5.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const std::uint64_t seed = static_cast<std::uint64_t>(GetParam());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
  const Tensor a = random_tensor({m, n}, rng);
  const Tensor a2 = random_tensor({m, n}, rng);
  const Tensor b = random_tensor({n, k}, rng);
  const Tensor bias = random_tensor({n}, rng);
  const Tensor gamma = random_tensor({n}, rng);
  std::vector<std::size_t> ids(m + 1);
  std::uniform_int_distribution<std::size_t> id(0, m - 1);
  for (auto& i : ids) i = id(rng);

  using Build = std::function<Var(Tape&, const Var&)>;
  const std::vector<std::pair<std::string, std::pair<Build, Tensor>>> cases = {
      {"matmul.a", {[&](Tape& t, const Var& x) { return matmul(x, t.constant(b)); }, a}},
      {"matmul.b", {[&](Tape& t, const Var& x) { return matmul(t.constant(a), x); }, b}},
      {"transpose", {[](Tape&, const Var& x) { return transpose(x); }, a}},
      {"add", {[&](Tape& t, const Var& x) { return add(x, t.constant(a2)); }, a}},
      {"sub", {[&](Tape& t, const Var& x) { return sub(t.constant(a2), x); }, a}},
      {"add_bias.x", {[&](Tape& t, const Var& x) { return add_bias(x, t.constant(bias)); }, a}},
      {"add_bias.b", {[&](Tape& t, const Var& x) { return add_bias(t.constant(a), x); }, bias}},
      {"mul", {[&](Tape& t, const Var& x) { return mul(x, t.constant(a2)); }, a}},
      {"mul.self", {[](Tape&, const Var& x) { return mul(x, x); }, a}},
      {"scale", {[](Tape&, const Var& x) { return scale(x, -1.7); }, a}},
      {"sum", {[](Tape&, const Var& x) { return mul(sum(x), sum(x)); }, a}},
      {"softmax.1", {[](Tape&, const Var& x) { return softmax(x, 1); }, a}},
      {"softmax.0", {[](Tape&, const Var& x) { return softmax(x, 0); }, a}},
      {"layer_norm.x",
       {[&](Tape& t, const Var& x) {
          return layer_norm(x, t.constant(gamma), t.constant(bias), 1e-5);
        }, a}},
      {"layer_norm.gamma",
       {[&](Tape& t, const Var& x) { return layer_norm(t.constant(a), x, t.constant(bias), 1e-5); },
        gamma}},
      {"layer_norm.beta",
       {[&](Tape& t, const Var& x) {
          return layer_norm(t.constant(a), t.constant(gamma), x, 1e-5);
        }, bias}},
      {"gelu", {[](Tape&, const Var& x) { return gelu(x); }, a}},
      {"embedding_lookup", {[&](Tape&, const Var& x) { return embedding_lookup(x, ids); }, a}},
      {"concat_rows",
       {[&](Tape& t, const Var& x) {
          const Var parts[] = {x, t.constant(a2), x};
          return concat_rows(parts);
        }, a}},
      {"concat_cols",
       {[&](Tape& t, const Var& x) {
          const Var parts[] = {t.constant(a2), x};
          return concat_cols(parts);
        }, a}},
      {"slice_rows", {[&](Tape&, const Var& x) { return slice_rows(x, m - 1, 1); }, a}},
      {"slice_cols", {[&](Tape&, const Var& x) { return slice_cols(x, 0, n); }, a}},
      {"bce.pos", {[](Tape&, const Var& x) { return bce_with_logits(x, 1.0); },
                   random_tensor({1, 1}, rng, 3.0)}},
      {"bce.neg", {[](Tape&, const Var& x) { return bce_with_logits(x, 0.0); },
                   random_tensor({1, 1}, rng, 3.0)}},
  };
  for (const auto& [name, c] : cases) {
    const auto& [build, x0] = c;
    auto r = grad_check([&](Tape& t, const Var& x) {
      Var y = build(t, x);
      return y.value().size() == 1 ? y : weighted_sum(t, y, seed);
    }, x0);
    EXPECT_LE(r.max_relative_error, 1e-4)
        << name << " seed " << seed << " worst index " << r.worst_index << " analytic "
        << r.worst_analytic << " numeric " << r.worst_numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Range(0, 100));

TEST(GradCheck, InjectedFaultIsCaught) {
  std::mt19937_64 rng(8);
  const Tensor b = random_tensor({3, 2}, rng);
  auto r = grad_check([&](Tape& t, const Var& x) {
    t.inject_backward_fault("matmul", 1.5);
    return weighted_sum(t, matmul(x, t.constant(b)), 1);
  }, random_tensor({2, 3}, rng));
  EXPECT_GT(r.max_relative_error, 0.1);
}

}  // namespace
}  // namespace memescope
