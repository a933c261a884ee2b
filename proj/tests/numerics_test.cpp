// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <vector>

#include "cdse/gradcheck.hpp"
#include "cdse/ops.hpp"
#include "cdse/rng.hpp"
#include "doctest.h"

namespace cdse {
namespace {

template <typename T>
Tensor<T> RandomTensor(Shape shape, Rng& rng, double lo = -1.0,
                       double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.Uniform(lo, hi));
  return t;
}

// Values bounded away from 0 (ReLU/PReLU kinks) with random sign.
template <typename T>
Tensor<T> RandomTensorAwayFromZero(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.Uniform(0.25, 1.25);
    t[i] = static_cast<T>(rng.Uniform() < 0.5 ? -mag : mag);
  }
  return t;
}

template <typename T>
double Dot(const Tensor<T>& a, const Tensor<T>& b) {
  REQUIRE(a.numel() == b.numel());
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

// Runs a generic scalar function through grad_check in both precisions:
// pure double probes for the f64 bound, double-oracle probes for the f32
// bound.
template <typename Fn>
void CheckGradBothPrecisions(Fn fn, const std::vector<Tensor<double>>& inputs,
                             double tol64 = 1e-6, double tol32 = 1e-3) {
  ScalarFn<double> f64 = fn;
  const double e64 = GradCheck<double>(f64, inputs, 1e-5);
  CHECK(e64 <= tol64);

  std::vector<Tensor<float>> inputs32;
  inputs32.reserve(inputs.size());
  for (const auto& t : inputs) inputs32.push_back(t.Cast<float>());
  ScalarFn<float> f32 = fn;
  const double e32 = GradCheck<float>(f32, f64, inputs32, 1e-3);
  CHECK(e32 <= tol32);
}

TEST_CASE("matmul matches direct summation") {
  // identity case
  Var<double> eye(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  Var<double> a(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  Tensor<double> prod = Matmul(eye, a).value();
  for (int i = 0; i < 4; ++i) CHECK(prod[i] == doctest::Approx(a.value()[i]));

  // [[1,2]] x [[3],[4]] = [[11]], against an explicit sum
  Var<double> r(Tensor<double>({1, 2}, {1, 2}));
  Var<double> c(Tensor<double>({2, 1}, {3, 4}));
  const double direct = 1 * 3 + 2 * 4;
  CHECK(Matmul(r, c).value()[0] == doctest::Approx(direct));

  // random case against a triple loop oracle
  Rng rng(7);
  Tensor<double> am = RandomTensor<double>({3, 4}, rng);
  Tensor<double> bm = RandomTensor<double>({4, 5}, rng);
  Tensor<double> got = Matmul(Var<double>(am), Var<double>(bm)).value();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += am.at(i, k) * bm.at(k, j);
      CHECK(got.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul shape errors name both operands") {
  Var<double> a(Tensor<double>({2, 3}));
  Var<double> b(Tensor<double>({2, 3}));
  CHECK_THROWS_WITH_AS(Matmul(a, b), doctest::Contains("[2x3]"), Error);
}

TEST_CASE("gradient of sum(A*B) w.r.t. A is ones x B^T") {
  Rng rng(3);
  Tensor<double> a = RandomTensor<double>({2, 3}, rng);
  Tensor<double> b = RandomTensor<double>({3, 4}, rng);
  Var<double> av(a, true);
  Var<double> bv(b);
  Backward(Sum(Matmul(av, bv)));
  // dA[i,k] = sum_j B[k,j]
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (int j = 0; j < 4; ++j) expect += b.at(k, j);
      CHECK(av.grad().at(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d basic examples") {
  // identity 1x1x1 kernel
  Var<double> x(Tensor<double>({1, 3}, {1, 2, 3}));
  Var<double> w_id(Tensor<double>({1, 1, 1}, {1}));
  Tensor<double> y = Conv1d(x, w_id, Conv1dSpec{}).value();
  CHECK(y[0] == 1);
  CHECK(y[1] == 2);
  CHECK(y[2] == 3);

  // moving sum, against direct summation
  Var<double> w_sum(Tensor<double>({1, 1, 2}, {1, 1}));
  Tensor<double> s = Conv1d(x, w_sum, Conv1dSpec{}).value();
  REQUIRE(s.numel() == 2);
  CHECK(s[0] == doctest::Approx(1 + 2));
  CHECK(s[1] == doctest::Approx(2 + 3));

  // length formula: T=16, P=16, stride 8 -> one frame
  CHECK(Conv1dOutLen(16, 16, Conv1dSpec{8, 0, 1, 1}) == 1);
}

TEST_CASE("conv1d rejects bad hyperparameters") {
  Var<double> x(Tensor<double>({1, 8}));
  Var<double> w(Tensor<double>({1, 1, 3}));
  CHECK_THROWS_AS(Conv1d(x, w, Conv1dSpec{0, 0, 1, 1}), Error);
  CHECK_THROWS_AS(Conv1d(x, w, Conv1dSpec{1, 0, 0, 1}), Error);
  CHECK_THROWS_AS(Conv1d(x, w, Conv1dSpec{1, 0, 1, -1}), Error);
}

TEST_CASE("conv1d length formula holds over random settings") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int kernel = 1 + int(rng.Below(5));
    const int stride = 1 + int(rng.Below(4));
    const int dilation = 1 + int(rng.Below(3));
    const int padding = int(rng.Below(4));
    const int span = dilation * (kernel - 1) + 1;
    const int t_in = span + int(rng.Below(40));
    if (t_in + 2 * padding < span) continue;
    Var<double> x(RandomTensor<double>({1, t_in}, rng));
    Var<double> w(RandomTensor<double>({1, 1, kernel}, rng));
    const Conv1dSpec spec{stride, padding, dilation, 1};
    const Tensor<double>& y = Conv1d(x, w, spec).value();
    CHECK(y.dim(1) == (t_in + 2 * padding - span) / stride + 1);
    CHECK(y.dim(1) == Conv1dOutLen(t_in, kernel, spec));
  }
}

TEST_CASE("conv1d against direct summation with dilation/padding/groups") {
  Rng rng(13);
  const int cin = 4, cout = 6, t_in = 21, kernel = 3;
  for (const int groups : {1, 2}) {
    for (const int dilation : {1, 2}) {
      for (const int stride : {1, 2}) {
        const int padding = dilation;
        Tensor<double> x = RandomTensor<double>({cin, t_in}, rng);
        Tensor<double> w =
            RandomTensor<double>({cout, cin / groups, kernel}, rng);
        Tensor<double> b = RandomTensor<double>({cout}, rng);
        const Conv1dSpec spec{stride, padding, dilation, groups};
        Tensor<double> y =
            Conv1d(Var<double>(x), Var<double>(w), Var<double>(b), spec)
                .value();
        const int t_out = Conv1dOutLen(t_in, kernel, spec);
        REQUIRE(y.dim(1) == t_out);
        const int cg = cin / groups;
        const int cout_per_group = cout / groups;
        for (int co = 0; co < cout; ++co) {
          for (int t = 0; t < t_out; ++t) {
            double acc = b[co];
            for (int c = 0; c < cg; ++c) {
              const int ci = (co / cout_per_group) * cg + c;
              for (int p = 0; p < kernel; ++p) {
                const int u = t * stride + p * dilation - padding;
                if (u >= 0 && u < t_in)
                  acc += w[(int64_t(co) * cg + c) * kernel + p] * x.at(ci, u);
              }
            }
            CHECK(y.at(co, t) == doctest::Approx(acc).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("conv1d_transpose scatter oracle and length formula") {
  // x=[1,0], w=[1,2], stride 2 -> [1,2,0,0]
  Var<double> x(Tensor<double>({1, 2}, {1, 0}));
  Var<double> w(Tensor<double>({1, 1, 2}, {1, 2}));
  Tensor<double> y = Conv1dTranspose(x, w, 2).value();
  REQUIRE(y.numel() == 4);
  CHECK(y[0] == 1);
  CHECK(y[1] == 2);
  CHECK(y[2] == 0);
  CHECK(y[3] == 0);

  // K=1, P=16, stride 8 -> T=16
  CHECK(Conv1dTransposeOutLen(1, 16, 8) == 16);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int k_in = 1 + int(rng.Below(9));
    const int kernel = 1 + int(rng.Below(6));
    const int stride = 1 + int(rng.Below(4));
    Var<double> xr(RandomTensor<double>({2, k_in}, rng));
    Var<double> wr(RandomTensor<double>({2, 3, kernel}, rng));
    CHECK(Conv1dTranspose(xr, wr, stride).value().dim(1) ==
          (k_in - 1) * stride + kernel);
  }
}

TEST_CASE("conv1d_transpose is the adjoint of conv1d") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int cin = 3, cout = 2, kernel = 4, stride = 2, t_in = 19;
    const int t_out = (t_in - kernel) / stride + 1;
    // shared weight buffer: conv reads [cout x cin x P], the transpose reads
    // the same values as [cout(in) x cin(out) x P]
    Tensor<double> w = RandomTensor<double>({cout, cin, kernel}, rng);
    Tensor<double> x = RandomTensor<double>({cin, t_in}, rng);
    Tensor<double> y = RandomTensor<double>({cout, t_out}, rng);
    Tensor<double> conv_x =
        Conv1d(Var<double>(x), Var<double>(w), Conv1dSpec{stride, 0, 1, 1})
            .value();
    Tensor<double> w_t(Shape{cout, cin, kernel}, w.vec());
    Tensor<double> adj_y =
        Conv1dTranspose(Var<double>(y), Var<double>(w_t), stride).value();
    REQUIRE(adj_y.dim(1) == (t_out - 1) * stride + kernel);
    // <conv(x), y> == <x, convT(y)> up to the length the transpose covers
    Tensor<double> adj_trim({cin, t_in});
    for (int c = 0; c < cin; ++c)
      for (int t = 0; t < adj_y.dim(1) && t < t_in; ++t)
        adj_trim.at(c, t) = adj_y.at(c, t);
    CHECK(Dot(conv_x, y) ==
          doctest::Approx(Dot(x, adj_trim)).epsilon(1e-10));
  }
}

TEST_CASE("elementwise examples") {
  Var<double> zero(Tensor<double>({1}, {0}));
  CHECK(Sigmoid(zero).value()[0] == doctest::Approx(0.5));

  Var<double> pair(Tensor<double>({2}, {-1, 2}));
  Tensor<double> r = Relu(pair).value();
  CHECK(r[0] == 0);
  CHECK(r[1] == 2);

  Var<double> a(Tensor<double>({2}, {1, 2}));
  Var<double> b(Tensor<double>({2}, {3, 4}));
  Tensor<double> m = Mul(a, b).value();
  CHECK(m[0] == 3);
  CHECK(m[1] == 8);

  CHECK_THROWS_AS(Add(a, Var<double>(Tensor<double>({3}))), Error);
}

TEST_CASE("concat splices rows and routes gradients back") {
  Rng rng(23);
  Tensor<double> top = RandomTensor<double>({256, 5}, rng);
  Tensor<double> bottom = RandomTensor<double>({256, 5}, rng);
  Var<double> tv(top, true);
  Var<double> bv(bottom, true);
  Var<double> cat = Concat<double>({tv, bv}, 0);
  REQUIRE(cat.shape() == Shape{512, 5});
  CHECK(cat.value().at(0, 0) == top.at(0, 0));
  CHECK(cat.value().at(256, 0) == bottom.at(0, 0));

  // single-tensor concat is the identity
  Tensor<double> same = Concat<double>({Var<double>(top)}, 0).value();
  for (int64_t i = 0; i < same.numel(); ++i) CHECK(same[i] == top[i]);

  // gradient of sum(weight * concat) routes slice i to parent i exactly
  Tensor<double> weight = RandomTensor<double>({512, 5}, rng);
  Backward(Sum(Mul(cat, Var<double>(weight))));
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 5; ++c) {
      CHECK(tv.grad().at(r, c) == weight.at(r, c));
      CHECK(bv.grad().at(r, c) == weight.at(r + 256, c));
    }
  }

  CHECK_THROWS_AS(
      Concat<double>({tv, Var<double>(Tensor<double>({256, 4}))}, 0), Error);
}

TEST_CASE("reductions") {
  Var<double> x(Tensor<double>({3}, {1, 2, 3}), true);
  CHECK(Sum(x).value()[0] == 6);
  Var<double> y(Tensor<double>({2}, {2, 4}));
  CHECK(Mean(y).value()[0] == 3);

  Backward(Sum(x));
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 1);

  Var<double> m(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Tensor<double> rows = Sum(m, 1).value();
  CHECK(rows[0] == 6);
  CHECK(rows[1] == 15);
  Tensor<double> cols = Mean(m, 0).value();
  CHECK(cols[0] == doctest::Approx(2.5));
  CHECK_THROWS_AS(Sum(m, 2), Error);
}

TEST_CASE("global layer norm: constant input and direct statistics oracle") {
  const int c_dim = 4, t_dim = 6;
  Var<double> gamma(Tensor<double>::Full({c_dim}, 1.0));
  Var<double> beta(Tensor<double>({c_dim}));
  Var<double> constant(Tensor<double>::Full({c_dim, t_dim}, 3.25));
  Tensor<double> z = GlobalLayerNorm(constant, gamma, beta, 1e-8).value();
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(0.0));

  Rng rng(31);
  Tensor<double> x = RandomTensor<double>({c_dim, t_dim}, rng, -2.0, 5.0);
  Tensor<double> g = RandomTensor<double>({c_dim}, rng, 0.5, 1.5);
  Tensor<double> out = GlobalLayerNorm(Var<double>(x), Var<double>(g),
                                       Var<double>(Tensor<double>({c_dim})),
                                       1e-8)
                           .value();
  // independent statistics oracle
  double mu = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) mu += x[i];
  mu /= double(x.numel());
  double var = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) var += (x[i] - mu) * (x[i] - mu);
  var /= double(x.numel());
  for (int c = 0; c < c_dim; ++c) {
    for (int t = 0; t < t_dim; ++t) {
      const double expect = g[c] * (x.at(c, t) - mu) / std::sqrt(var + 1e-8);
      CHECK(out.at(c, t) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
  // with beta = 0 the output mean is ~0 and variance ~mean(gamma^2) when
  // gamma is channel-constant;
  double out_mean = 0.0;
  for (int64_t i = 0; i < out.numel(); ++i) out_mean += out[i];
  out_mean /= double(out.numel());
  CHECK(std::abs(out_mean) < 0.3);  // per-channel gamma reweights slightly
}

TEST_CASE("backward: quadratic, accumulation, unreachable parameters") {
  // loss = sum(w . w), w=[1,2] -> grad [2,4]
  Var<double> w(Tensor<double>({2}, {1, 2}), true);
  Backward(Sum(Mul(w, w)));
  CHECK(w.grad()[0] == doctest::Approx(2));
  CHECK(w.grad()[1] == doctest::Approx(4));

  // two uses accumulate: loss = sum(w + w) -> grad 2
  Var<double> u(Tensor<double>({1}, {5}), true);
  Backward(Sum(Add(u, u)));
  CHECK(u.grad()[0] == doctest::Approx(2));

  // n-fold accumulation matches single-use scaling
  for (int uses = 1; uses <= 5; ++uses) {
    Var<double> p(Tensor<double>({3}, {0.5, -1.0, 2.0}), true);
    Var<double> acc;
    for (int i = 0; i < uses; ++i)
      acc = acc.defined() ? Add(acc, p) : Var<double>(p);
    Backward(Sum(acc));
    for (int i = 0; i < 3; ++i)
      CHECK(p.grad()[i] == doctest::Approx(double(uses)));
  }

  // gradient of an unreachable parameter stays zero
  Var<double> reached(Tensor<double>({1}, {1}), true);
  Var<double> unreached(Tensor<double>({1}, {1}), true);
  unreached.ZeroGrad();
  Backward(Sum(Mul(reached, reached)));
  CHECK(unreached.grad()[0] == 0);

  // non-scalar loss is a contract error
  Var<double> vec(Tensor<double>({2}), true);
  CHECK_THROWS_AS(Backward(Add(vec, vec)), Error);
}

TEST_CASE("grad_check analytic anchor: sum(sigmoid(x)) at 0") {
  // sigmoid'(0) = 1/4 per coordinate
  Tensor<double> zeros({4});
  ScalarFn<double> f = [](std::vector<Var<double>>& v) {
    return Sum(Sigmoid(v[0]));
  };
  std::vector<Var<double>> vars{Var<double>(zeros, true)};
  Var<double> out = f(vars);
  Backward(out);
  for (int i = 0; i < 4; ++i)
    CHECK(vars[0].grad()[i] == doctest::Approx(0.25));
  CHECK(GradCheck<double>(f, {zeros}, 1e-6) <= 1e-6);
}

TEST_CASE("grad_check rejects non-scalar functions and bad eps") {
  ScalarFn<double> vector_valued = [](std::vector<Var<double>>& v) {
    return Add(v[0], v[0]);
  };
  CHECK_THROWS_AS(GradCheck<double>(vector_valued, {Tensor<double>({2})}, 1e-4),
                  Error);
  ScalarFn<double> f = [](std::vector<Var<double>>& v) { return Sum(v[0]); };
  CHECK_THROWS_AS(GradCheck<double>(f, {Tensor<double>({2})}, 1e-3 * 100),
                  Error);
}

TEST_CASE("grad_check detects a broken backward rule") {
  // a deliberately wrong adjoint: forward 2x, backward claims 3x
  ScalarFn<double> broken = [](std::vector<Var<double>>& v) {
    Tensor<double> doubled(v[0].shape());
    for (int64_t i = 0; i < doubled.numel(); ++i)
      doubled[i] = 2.0 * v[0].value()[i];
    Var<double> mid = Var<double>::MakeOp(
        OpKind::kCustom, std::move(doubled), {v[0]}, [](Node<double>& n) {
          auto& p = *n.parents[0];
          if (!p.requires_grad) return;
          if (p.grad.empty()) p.grad = Tensor<double>(p.value.shape());
          for (int64_t i = 0; i < n.grad.numel(); ++i)
            p.grad[i] += 3.0 * n.grad[i];
        });
    return Sum(mid);
  };
  Rng rng(41);
  const double err =
      GradCheck<double>(broken, {RandomTensor<double>({3}, rng)}, 1e-5);
  CHECK(err > 0.1);
}

TEST_CASE("every differentiable primitive passes grad_check at 10 points") {
  struct Case {
    const char* name;
    std::function<void(Rng&)> run;
  };

  auto run_case = [](auto fn, std::vector<Tensor<double>> inputs) {
    CheckGradBothPrecisions(fn, inputs);
  };

  for (uint64_t point = 0; point < 10; ++point) {
    Rng rng(1000 + point);
    CAPTURE(point);

    run_case(
        [](auto& v) { return Sum(Matmul(v[0], v[1])); },
        {RandomTensor<double>({3, 4}, rng), RandomTensor<double>({4, 2}, rng)});

    run_case(
        [](auto& v) {
          return Sum(Mul(Conv1d(v[0], v[1], v[2], Conv1dSpec{2, 2, 2, 1}),
                         Conv1d(v[0], v[1], v[2], Conv1dSpec{2, 2, 2, 1})));
        },
        {RandomTensor<double>({2, 17}, rng),
         RandomTensor<double>({3, 2, 3}, rng),
         RandomTensor<double>({3}, rng)});

    // depthwise
    run_case(
        [](auto& v) {
          return Sum(Mul(Conv1d(v[0], v[1], v[2], Conv1dSpec{1, 2, 2, 3}),
                         Var<std::decay_t<decltype(v[0].value()[0])>>::
                             Constant(1)));
        },
        {RandomTensor<double>({3, 12}, rng),
         RandomTensor<double>({3, 1, 3}, rng),
         RandomTensor<double>({3}, rng)});

    run_case(
        [](auto& v) {
          auto y = Conv1dTranspose(v[0], v[1], 3);
          return Sum(Mul(y, y));
        },
        {RandomTensor<double>({2, 6}, rng),
         RandomTensor<double>({2, 3, 4}, rng)});

    run_case([](auto& v) { return Sum(Mul(Add(v[0], v[1]), v[0])); },
             {RandomTensor<double>({5}, rng), RandomTensor<double>({5}, rng)});
    run_case([](auto& v) { return Sum(Mul(Sub(v[0], v[1]), v[0])); },
             {RandomTensor<double>({5}, rng), RandomTensor<double>({5}, rng)});
    run_case(
        [](auto& v) { return Sum(Div(v[0], v[1])); },
        {RandomTensor<double>({5}, rng),
         RandomTensorAwayFromZero<double>({5}, rng)});
    run_case([](auto& v) { return Sum(Sigmoid(v[0])); },
             {RandomTensor<double>({6}, rng, -3, 3)});
    run_case([](auto& v) { return Sum(Mul(Relu(v[0]), v[0])); },
             {RandomTensorAwayFromZero<double>({6}, rng)});
    run_case([](auto& v) { return Sum(Tanh(v[0])); },
             {RandomTensor<double>({6}, rng, -2, 2)});
    run_case([](auto& v) { return Sum(Log(v[0])); },
             {RandomTensor<double>({6}, rng, 0.5, 2.0)});
    run_case([](auto& v) { return Sum(Mul(Prelu(v[0], v[1]), v[0])); },
             {RandomTensorAwayFromZero<double>({3, 5}, rng),
              RandomTensor<double>({3}, rng, 0.1, 0.5)});
    run_case(
        [](auto& v) {
          auto cat = Concat({v[0], v[1]}, 0);
          return Sum(Mul(cat, cat));
        },
        {RandomTensor<double>({2, 3}, rng), RandomTensor<double>({4, 3}, rng)});
    run_case(
        [](auto& v) {
          auto s = SliceRows(v[0], 1, 3);
          return Sum(Mul(s, s));
        },
        {RandomTensor<double>({4, 3}, rng)});
    run_case(
        [](auto& v) {
          auto m = Mean(v[0], 1);
          return Sum(Mul(m, m));
        },
        {RandomTensor<double>({3, 4}, rng)});
    run_case(
        [](auto& v) {
          auto y = GlobalLayerNorm(
              v[0], v[1], v[2],
              static_cast<std::decay_t<decltype(v[0].value()[0])>>(1e-6));
          return Sum(Mul(y, y));
        },
        {RandomTensor<double>({3, 7}, rng),
         RandomTensor<double>({3}, rng, 0.5, 1.5),
         RandomTensor<double>({3}, rng, -0.5, 0.5)});
  }
}

TEST_CASE("gradcheck through conv1d hits 1e-6 in float64") {
  Rng rng(99);
  ScalarFn<double> f = [](std::vector<Var<double>>& v) {
    Var<double> y = Conv1d(v[0], v[1], v[2], Conv1dSpec{1, 1, 1, 1});
    return Sum(Mul(y, y));
  };
  const double err = GradCheck<double>(
      f,
      {RandomTensor<double>({2, 9}, rng), RandomTensor<double>({2, 2, 3}, rng),
       RandomTensor<double>({2}, rng)},
      1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("adjoint identity for linear ops via the tape") {
  // For y fixed, <L(x), y> must equal <x, Lt(y)> where Lt(y) is what the
  // backward rule deposits in x.grad.
  Rng rng(121);
  auto check_linear = [&](auto make_op, Shape in_shape) {
    Tensor<double> x = RandomTensor<double>(in_shape, rng);
    Var<double> xv(x, true);
    Var<double> out = make_op(xv);
    Tensor<double> y = RandomTensor<double>(out.value().shape(), rng);
    const double lhs = Dot(out.value(), y);
    Backward(Sum(Mul(out, Var<double>(y))));
    const double rhs = Dot(x, xv.grad());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  };

  Tensor<double> w = RandomTensor<double>({3, 2, 4}, rng);
  check_linear(
      [&](Var<double>& x) {
        return Conv1d(x, Var<double>(w), Conv1dSpec{2, 1, 1, 1});
      },
      {2, 15});
  Tensor<double> wt = RandomTensor<double>({2, 3, 4}, rng);
  check_linear(
      [&](Var<double>& x) { return Conv1dTranspose(x, Var<double>(wt), 2); },
      {2, 6});
  Tensor<double> m = RandomTensor<double>({4, 3}, rng);
  check_linear([&](Var<double>& x) { return Matmul(Var<double>(m), x); },
               {3, 5});
  check_linear([&](Var<double>& x) { return SliceRows(x, 1, 4); }, {5, 3});
  check_linear([&](Var<double>& x) { return Concat<double>({x, x}, 0); },
               {3, 3});
}

}  // namespace
}  // namespace cdse
