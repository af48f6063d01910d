// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fhdr/gradcheck.hpp"
#include "fhdr/graph.hpp"
#include "fhdr/ops.hpp"
#include "fhdr/parallel.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {
namespace {

using TD = Tensor<double>;

TD random_tensor(Shape s, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(s.numel());
  for (auto& x : v) x = nd(rng);
  return TD(s, std::move(v), grad);
}

// Straight six-loop correlation with zero padding.
std::vector<double> direct_conv(const TD& in, const TD& w, const TD& b, int dil) {
  const Shape is = in.shape();
  const Shape ws = w.shape();
  const int k = ws.h;
  const int pad = (k - 1) * dil / 2;
  std::vector<double> out(static_cast<std::size_t>(is.n) * ws.n * is.h * is.w);
  std::size_t o = 0;
  for (int n = 0; n < is.n; ++n)
    for (int co = 0; co < ws.n; ++co)
      for (int y = 0; y < is.h; ++y)
        for (int x = 0; x < is.w; ++x) {
          double acc = b.data()[co];
          for (int ci = 0; ci < is.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = y - pad + ky * dil;
                const int xx = x - pad + kx * dil;
                if (yy < 0 || xx < 0 || yy >= is.h || xx >= is.w) continue;
                acc += in.at(n, ci, yy, xx) * w.at(co, ci, ky, kx);
              }
          out[o++] = acc;
        }
  return out;
}

TEST(Conv2d, OnesKernelOnOnesImage) {
  Graph<double> g(false);
  auto in = TD::full({1, 1, 3, 3}, 1.0);
  auto w = TD::full({1, 1, 3, 3}, 1.0);
  auto b = TD::zeros({1, 1, 1, 1});
  auto out = ops::conv2d(g, in, w, b);
  EXPECT_EQ(out.at(0, 0, 1, 1), 9.0);
  for (auto [y, x] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) EXPECT_EQ(out.at(0, 0, y, x), 4.0);
  for (auto [y, x] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}}) EXPECT_EQ(out.at(0, 0, y, x), 6.0);
}

TEST(Conv2d, IdentityPointwiseKernel) {
  Graph<double> g(false);
  auto in = random_tensor({2, 4, 5, 6}, 3);
  auto w = TD::zeros({1, 4, 1, 1});
  w.mutable_data()[0] = 1.0;
  auto out = ops::conv2d(g, in, w, TD::zeros({1, 1, 1, 1}));
  ASSERT_EQ(out.shape(), (Shape{2, 1, 5, 6}));
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) EXPECT_EQ(out.at(n, 0, y, x), in.at(n, 0, y, x));
}

TEST(Conv2d, DilatedImpulseResponse) {
  Graph<double> g(false);
  auto in = TD::zeros({1, 1, 5, 5});
  in.mutable_data()[12] = 1.0;
  auto out = ops::conv2d(g, in, TD::full({1, 1, 3, 3}, 1.0), TD::zeros({1, 1, 1, 1}), 2);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const bool on_grid = y % 2 == 0 && x % 2 == 0;
      EXPECT_EQ(out.at(0, 0, y, x), on_grid ? 1.0 : 0.0) << y << "," << x;
    }
}

TEST(Conv2d, MatchesDirectReference) {
  Graph<double> g(false);
  int seed = 10;
  for (int k : {1, 3})
    for (int dil : {1, 2, 3}) {
      auto in = random_tensor({2, 5, 7, 6}, seed++);
      auto w = random_tensor({4, 5, k, k}, seed++);
      auto b = random_tensor({1, 4, 1, 1}, seed++);
      auto out = ops::conv2d(g, in, w, b, dil);
      ASSERT_EQ(out.shape(), (Shape{2, 4, 7, 6}));
      auto ref = direct_conv(in, w, b, dil);
      for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_NEAR(out.data()[i], ref[i], 1e-6 * std::max(1.0, std::abs(ref[i])));
    }
}

TEST(Conv2d, SinglePrecisionMatchesReference) {
  Graph<float> g(false);
  auto ind = random_tensor({1, 3, 6, 6}, 40);
  auto wd = random_tensor({2, 3, 3, 3}, 41);
  auto bd = random_tensor({1, 2, 1, 1}, 42);
  auto cast = [](const TD& t) {
    std::vector<float> v(t.data().begin(), t.data().end());
    return Tensor<float>(t.shape(), v);
  };
  auto out = ops::conv2d(g, cast(ind), cast(wd), cast(bd), 2);
  auto ref = direct_conv(ind, wd, bd, 2);
  for (std::size_t i = 0; i < ref.size(); ++i)
    EXPECT_NEAR(out.data()[i], ref[i], 1e-5 * std::max(1.0, std::abs(ref[i])));
}

TEST(Conv2d, ContractErrors) {
  Graph<double> g(false);
  auto in = TD::zeros({1, 2, 4, 4});
  auto b = TD::zeros({1, 1, 1, 1});
  EXPECT_THROW(ops::conv2d(g, in, TD::zeros({1, 3, 3, 3}), b), ContractError);
  EXPECT_THROW(ops::conv2d(g, in, TD::zeros({1, 2, 3, 3}), b, 0), ContractError);
  EXPECT_THROW(ops::conv2d(g, in, TD::zeros({1, 2, 5, 5}), b), ContractError);
  EXPECT_THROW(ops::conv2d(g, in, TD::zeros({1, 2, 3, 3}), TD::zeros({1, 2, 1, 1})),
               ContractError);
}

TEST(Relu, ForwardAndGradient) {
  Graph<double> g;
  TD x({1, 3, 1, 1}, {-1.0, 0.0, 2.0}, true);
  auto y = ops::relu(g, x);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()),
            (std::vector<double>{0.0, 0.0, 2.0}));
  g.backward(ops::sum(g, y));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(Relu, Idempotent) {
  Graph<double> g(false);
  auto x = random_tensor({2, 3, 4, 4}, 5);
  auto once = ops::relu(g, x);
  auto twice = ops::relu(g, once);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(once.data()[i], twice.data()[i]);
}

TEST(Concat, ShapeRoundTripAndGradient) {
  Graph<double> g;
  auto a = random_tensor({1, 64, 8, 8}, 1, true);
  auto b = random_tensor({1, 64, 8, 8}, 2, true);
  auto c = ops::concat_channels(g, a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 128, 8, 8}));
  auto a2 = ops::slice_channels(g, c, 0, 64);
  auto b2 = ops::slice_channels(g, c, 64, 64);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_EQ(a2.data()[i], a.data()[i]);
    EXPECT_EQ(b2.data()[i], b.data()[i]);
  }
  g.backward(ops::sum(g, c));
  for (double v : a.grad()) EXPECT_EQ(v, 1.0);
  for (double v : b.grad()) EXPECT_EQ(v, 1.0);
}

TEST(Concat, MismatchThrows) {
  Graph<double> g(false);
  EXPECT_THROW(ops::concat_channels(g, TD::zeros({1, 2, 4, 4}), TD::zeros({1, 2, 4, 5})),
               ContractError);
  EXPECT_THROW(ops::concat_channels(g, TD::zeros({1, 2, 4, 4}), TD::zeros({2, 2, 4, 4})),
               ContractError);
}

TEST(Add, Examples) {
  Graph<double> g(false);
  TD a({1, 2, 1, 1}, {1.0, 2.0});
  TD b({1, 2, 1, 1}, {3.0, 4.0});
  auto c = ops::add(g, a, b);
  EXPECT_EQ(c.data()[0], 4.0);
  EXPECT_EQ(c.data()[1], 6.0);
  auto z = ops::add(g, a, TD::zeros(a.shape()));
  EXPECT_EQ(z.data()[0], 1.0);
  EXPECT_EQ(z.data()[1], 2.0);
  EXPECT_THROW(ops::add(g, a, TD::zeros({1, 3, 1, 1})), ContractError);
}

TEST(Log1pScaled, Examples) {
  Graph<double> g(false);
  TD x({1, 3, 1, 1}, {0.0, 1.0, 0.5});
  auto y = ops::log1p_scaled(g, x, 5000.0);
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-15);
  EXPECT_NEAR(y.data()[2], std::log(2501.0) / std::log(5001.0), 1e-12);
  EXPECT_NEAR(y.data()[2], 0.91866, 5e-5);
  EXPECT_EQ(ops::log1p_scaled(g, TD::scalar(0.0), 3.0).item(), 0.0);
}

TEST(Log1pScaled, NegativeInputNamesIndex) {
  Graph<double> g(false);
  TD x({1, 4, 1, 1}, {0.0, 1.0, -0.5, 2.0});
  try {
    (void)ops::log1p_scaled(g, x, 5000.0);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos) << e.what();
  }
}

TEST(L1Mean, ExamplesAndGradient) {
  Graph<double> g;
  TD a({1, 2, 1, 1}, {0.0, 0.0});
  TD b({1, 2, 1, 1}, {1.0, 3.0});
  EXPECT_EQ(ops::l1_mean(g, a, b).item(), 2.0);
  EXPECT_EQ(ops::l1_mean(g, b, b).item(), 0.0);
  TD p({1, 2, 1, 1}, {2.0, 2.0}, true);
  TD q({1, 2, 1, 1}, {1.0, 1.0});
  g.clear();
  g.backward(ops::l1_mean(g, p, q));
  EXPECT_EQ(p.grad()[0], 0.5);
  EXPECT_EQ(p.grad()[1], 0.5);
  EXPECT_THROW(ops::l1_mean(g, a, TD::zeros({1, 3, 1, 1})), ContractError);
}

TEST(Backward, SumGivesOnes) {
  Graph<double> g;
  TD x({2, 1, 1, 1}, {3.0, -4.0}, true);
  g.backward(ops::sum(g, x));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Backward, NonScalarThrows) {
  Graph<double> g;
  TD x({2, 1, 1, 1}, {3.0, -4.0}, true);
  auto y = ops::scale(g, x, 2.0);
  EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Backward, TwoConsumersSum) {
  Graph<double> g;
  auto x = random_tensor({1, 2, 3, 3}, 9, true);
  auto y = ops::add(g, ops::scale(g, x, 2.0), ops::scale(g, x, 3.0));
  g.backward(ops::sum(g, y));
  for (double v : x.grad()) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(Backward, AccumulationIsLinear) {
  auto x = random_tensor({1, 2, 4, 4}, 11, true);
  auto w = random_tensor({2, 2, 3, 3}, 12, true);
  auto b = random_tensor({1, 2, 1, 1}, 13, true);
  auto l1 = [&](Graph<double>& g) { return ops::sum(g, ops::relu(g, ops::conv2d(g, x, w, b))); };
  auto l2 = [&](Graph<double>& g) { return ops::mean(g, ops::scale(g, x, 0.7)); };

  Graph<double> ga;
  ga.backward(ops::add(ga, l1(ga), l2(ga)));
  std::vector<double> joint(x.grad().begin(), x.grad().end());

  x.clear_grad();
  Graph<double> g1;
  g1.backward(l1(g1));
  Graph<double> g2;
  g2.backward(l2(g2));
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(x.grad()[i], joint[i], 1e-12);
}

TEST(Backward, ConvReluMatchesFiniteDifferences) {
  auto x = random_tensor({1, 2, 5, 5}, 21, true);
  auto w = random_tensor({3, 2, 3, 3}, 22, true);
  auto b = random_tensor({1, 3, 1, 1}, 23, true);
  ScalarFn fn = [&](Graph<double>& g) {
    return ops::sum(g, ops::relu(g, ops::conv2d(g, x, w, b)));
  };
  GradcheckOptions opt;
  auto r = gradcheck("conv_relu", fn, {{"x", x}, {"w", w}, {"b", b}}, opt, 0);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.checked, 0u);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(gradcheck_relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(gradcheck_relative_error(1e-9, 0.0), 1e-9 / 1e-6);
}

TEST(Gradcheck, EveryOpPasses) {
  auto results = gradcheck_ops(GradcheckOptions{});
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " max_rel " << r.max_rel_error;
    EXPECT_GT(r.checked, 0u) << r.name;
  }
}

TEST(Gradcheck, InjectedFaultIsCaught) {
  GradcheckOptions opt;
  opt.inject_conv_fault = true;
  int failed = 0;
  for (const auto& r : gradcheck_ops(opt)) failed += r.passed ? 0 : 1;
  EXPECT_GT(failed, 0);
}

TEST(Gradcheck, UnrolledModelPasses) {
  auto results = gradcheck_model(GradcheckOptions{});
  ASSERT_FALSE(results.empty());
  bool saw_input = false;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " max_rel " << r.max_rel_error;
    EXPECT_EQ(r.name.rfind("bptt_n2/", 0), 0u) << r.name;
    saw_input |= r.name == "bptt_n2/input";
  }
  EXPECT_TRUE(saw_input);
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  auto in = random_tensor({3, 8, 12, 12}, 31);
  auto w = random_tensor({8, 8, 3, 3}, 32, true);
  auto b = random_tensor({1, 8, 1, 1}, 33);
  auto run = [&](int threads) {
    set_worker_threads(threads);
    w.clear_grad();
    Graph<double> g;
    auto y = ops::conv2d(g, in, w, b, 2);
    g.backward(ops::sum(g, ops::relu(g, y)));
    std::vector<double> r(y.data().begin(), y.data().end());
    r.insert(r.end(), w.grad().begin(), w.grad().end());
    return r;
  };
  auto one = run(1);
  auto four = run(4);
  set_worker_threads(0);
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) ASSERT_EQ(one[i], four[i]) << i;
}

TEST(Ops, PureAndBitwiseRepeatable) {
  auto x = random_tensor({1, 3, 6, 6}, 51);
  auto w = random_tensor({4, 3, 3, 3}, 52);
  auto b = random_tensor({1, 4, 1, 1}, 53);
  Graph<double> g(false);
  auto y1 = ops::avg_pool2(g, ops::relu(g, ops::conv2d(g, x, w, b)));
  auto y2 = ops::avg_pool2(g, ops::relu(g, ops::conv2d(g, x, w, b)));
  EXPECT_EQ(y1.shape(), (Shape{1, 4, 3, 3}));
  for (std::size_t i = 0; i < y1.numel(); ++i) ASSERT_EQ(y1.data()[i], y2.data()[i]);
}

}  // namespace
}  // namespace fhdr
