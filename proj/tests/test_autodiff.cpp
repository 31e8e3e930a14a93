#include <doctest.h>

#include "reswm/nn.hpp"
#include "reswm/ops.hpp"

using namespace reswm;

namespace {

Tensor random_tensor(std::vector<int> shape, CounterRng& rng, Real lo = -1, Real hi = 1) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Weighted scalarization so the cotangent flowing into the op is non-uniform.
Tensor weighted_sum(const Tensor& y, const Tensor& w) { return sum(mul(y, w.constant())); }

constexpr Real kStep = Real(1e-5);
constexpr Real kTol = Real(1e-4);

}  // namespace

TEST_CASE("elementwise primitives match finite differences over random shapes") {
  CounterRng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 4);
    const int n = 1 + static_cast<int>(rng.next_u64() % 5);
    Tensor w = random_tensor({m, n}, rng);
    Tensor other = random_tensor({m, n}, rng, Real(0.5), Real(2.0));  // safe divisor
    Tensor pos = random_tensor({m, n}, rng, Real(0.2), Real(2.0));

    auto chk = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
      GradCheckReport rep = check_gradients(f, at, kStep, kTol);
      CAPTURE(trial);
      CHECK_MESSAGE(rep.pass, "max_rel_err=", rep.max_rel_err);
    };
    Tensor x = random_tensor({m, n}, rng);
    chk([&](const Tensor& t) { return weighted_sum(add(t, other), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(sub(other, t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(mul(t, other), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(div(t, other), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(div(other, t), w); }, pos);
    chk([&](const Tensor& t) { return weighted_sum(scale(t, Real(-1.7)), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(add_scalar(t, Real(0.4)), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(neg(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(tanh(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(sigmoid(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(softplus(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(exp(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(log(t), w); }, pos);
    chk([&](const Tensor& t) { return weighted_sum(square(t), w); }, x);
    chk([&](const Tensor& t) { return weighted_sum(inv_sqrt(t), w); }, pos);
  }
}

TEST_CASE("maximum passes gradient only above the threshold") {
  CounterRng rng(12);
  // Keep every coordinate away from the kink so central differences are valid.
  Tensor x({2, 3});
  for (int i = 0; i < x.numel(); ++i) {
    Real v = static_cast<Real>(rng.uniform(-1, 1));
    x[i] = std::abs(v - Real(0.3)) < Real(0.05) ? v + Real(0.1) : v;
  }
  Tensor w = random_tensor({2, 3}, rng);
  GradCheckReport rep = check_gradients(
      [&](const Tensor& t) { return weighted_sum(maximum(t, Real(0.3)), w); }, x, kStep, kTol);
  CHECK(rep.pass);
}

TEST_CASE("matmul, broadcasts, reductions and shape ops match finite differences") {
  CounterRng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 1 + static_cast<int>(rng.next_u64() % 4);
    const int k = 1 + static_cast<int>(rng.next_u64() % 4);
    const int n = 1 + static_cast<int>(rng.next_u64() % 4);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor w = random_tensor({m, n}, rng);
    auto chk = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
      GradCheckReport rep = check_gradients(f, at, kStep, kTol);
      CHECK_MESSAGE(rep.pass, "max_rel_err=", rep.max_rel_err);
    };
    chk([&](const Tensor& t) { return weighted_sum(matmul(t, b), w); }, a);
    chk([&](const Tensor& t) { return weighted_sum(matmul(a, t), w); }, b);

    Tensor v = random_tensor({n}, rng);
    Tensor mn = random_tensor({m, n}, rng);
    chk([&](const Tensor& t) { return weighted_sum(add_rowvec(mn, t), w); }, v);
    chk([&](const Tensor& t) { return weighted_sum(add_rowvec(t, v), w); }, mn);

    chk([&](const Tensor& t) { return sum(t); }, mn);
    chk([&](const Tensor& t) { return mean(t); }, mn);
    Tensor wc = random_tensor({m, 1}, rng);
    chk([&](const Tensor& t) { return weighted_sum(row_sum(t), wc); }, mn);
    chk([&](const Tensor& t) { return weighted_sum(row_mean(t), wc); }, mn);

    Tensor wr = random_tensor({n, m}, rng);
    chk([&](const Tensor& t) { return weighted_sum(reshape(t, {n, m}), wr); }, mn.clone());
    chk([&](const Tensor& t) { return weighted_sum(bcast_col(t, n), w); }, wc);
    chk([&](const Tensor& t) { return weighted_sum(bcast_row(t, m), w); }, v);

    Tensor rhs = random_tensor({m, 2}, rng);
    Tensor wcat = random_tensor({m, n + 2}, rng);
    chk([&](const Tensor& t) { return weighted_sum(concat_cols(t, rhs), wcat); }, mn);
    chk([&](const Tensor& t) { return weighted_sum(concat_cols(mn, t), wcat); }, rhs);
    chk([&](const Tensor& t) { return weighted_sum(slice_cols(t, 0, 1), wc); }, mn);

    Tensor wrows = random_tensor({2 * m, n}, rng);
    chk([&](const Tensor& t) { return weighted_sum(concat_rows({t, mn}), wrows); }, mn.clone());
    Tensor ws = random_tensor({m, n}, rng);
    chk([&](const Tensor& t) { return weighted_sum(slice_rows(t, m, m), ws); }, wrows);
  }
}

TEST_CASE("convolution primitives match finite differences") {
  CounterRng rng(14);
  Tensor x = random_tensor({2, 2, 7, 7}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor cot = random_tensor({2, 3, 3, 3}, rng);
  auto chk = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
    GradCheckReport rep = check_gradients(f, at, kStep, kTol);
    CHECK_MESSAGE(rep.pass, "max_rel_err=", rep.max_rel_err);
  };
  chk([&](const Tensor& t) { return weighted_sum(conv2d(t, w, 2), cot); }, x);
  chk([&](const Tensor& t) { return weighted_sum(conv2d(x, t, 2), cot); }, w);

  Tensor up_cot = random_tensor({2, 2, 7, 7}, rng);
  chk([&](const Tensor& t) { return weighted_sum(conv2d_transpose(t, w, 2), up_cot); }, cot);
  chk([&](const Tensor& t) { return weighted_sum(conv2d_transpose(cot, t, 2), up_cot); }, w);

  Tensor bias = random_tensor({3}, rng);
  chk([&](const Tensor& t) { return weighted_sum(add_channel_bias(cot, t), cot); }, bias);
  chk([&](const Tensor& t) { return weighted_sum(add_channel_bias(t, bias), cot); }, cot.clone());
}

TEST_CASE("layer norm, reparameterized sampling and Gaussian KL match finite differences") {
  CounterRng rng(15);
  const int m = 3, n = 5;
  Tensor x = random_tensor({m, n}, rng);
  Tensor gain = random_tensor({n}, rng, Real(0.5), Real(1.5));
  Tensor bias = random_tensor({n}, rng);
  Tensor w = random_tensor({m, n}, rng);
  auto chk = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
    GradCheckReport rep = check_gradients(f, at, kStep, kTol);
    CHECK_MESSAGE(rep.pass, "max_rel_err=", rep.max_rel_err);
  };
  chk([&](const Tensor& t) { return weighted_sum(layer_norm(t, gain, bias, Real(1e-5)), w); }, x);
  chk([&](const Tensor& t) { return weighted_sum(layer_norm(x, t, bias, Real(1e-5)), w); }, gain);
  chk([&](const Tensor& t) { return weighted_sum(layer_norm(x, gain, t, Real(1e-5)), w); }, bias);

  Tensor mu = random_tensor({m, n}, rng);
  Tensor sigma = random_tensor({m, n}, rng, Real(0.3), Real(1.5));
  Tensor noise = random_tensor({m, n}, rng);
  Tensor wc = random_tensor({m, 1}, rng);
  chk([&](const Tensor& t) {
    return add(weighted_sum(reparam_sample_gaussian(t, sigma, noise).first, w),
               weighted_sum(reparam_sample_gaussian(t, sigma, noise).second, wc));
  },
      mu);
  chk([&](const Tensor& t) {
    return add(weighted_sum(reparam_sample_gaussian(mu, t, noise).first, w),
               weighted_sum(reparam_sample_gaussian(mu, t, noise).second, wc));
  },
      sigma);

  Tensor mu2 = random_tensor({m, n}, rng);
  Tensor s2 = random_tensor({m, n}, rng, Real(0.3), Real(1.5));
  chk([&](const Tensor& t) { return weighted_sum(kl_diag_gaussian(t, sigma, mu2, s2), wc); }, mu);
  chk([&](const Tensor& t) { return weighted_sum(kl_diag_gaussian(mu, t, mu2, s2), wc); }, sigma);
  chk([&](const Tensor& t) { return weighted_sum(kl_diag_gaussian(mu, sigma, t, s2), wc); }, mu2);
  chk([&](const Tensor& t) { return weighted_sum(kl_diag_gaussian(mu, sigma, mu2, t), wc); }, s2);
}

TEST_CASE("gradients accumulate when a tensor feeds several ops") {
  Tensor x({2}, {Real(0.5), Real(-0.25)});
  Tape tape;
  Tensor xt = watch(x);
  Tensor y = sum(add(mul(xt, xt), scale(xt, Real(3))));  // d/dx = 2x + 3
  tape.backward(y);
  Tensor g = tape.gradient(xt);
  CHECK(g[0] == doctest::Approx(2 * 0.5 + 3).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(2 * -0.25 + 3).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar and untracked roots") {
  Tensor x({2, 2});
  Tape tape;
  Tensor xt = watch(x);
  CHECK_THROWS(tape.backward(square(xt)));
  CHECK_THROWS(tape.backward(Tensor::scalar(1)));
}

TEST_CASE("a corrupted analytic gradient is rejected by the finite-difference probe") {
  CounterRng rng(16);
  Tensor x = random_tensor({3, 3}, rng);
  std::vector<Real> analytic;
  {
    Tape tape;
    Tensor xt = watch(x);
    Tensor y = sum(square(xt));
    tape.backward(y);
    Tensor g = tape.gradient(xt);
    analytic.assign(g.store->begin(), g.store->end());
  }
  auto f = [&]() { Tape t; return sum(square(x)).value(); };
  CHECK(fd_max_rel_err(f, x, analytic, kStep) < kTol);
  std::vector<Real> corrupted = analytic;
  corrupted[4] += Real(0.01);
  CHECK(fd_max_rel_err(f, x, corrupted, kStep) > kTol);
}

TEST_CASE("adam with zero learning rate applies exactly the decoupled decay") {
  CounterRng rng(17);
  Tensor w = random_tensor({4, 4}, rng);
  Tensor before = w.clone();
  ParamRegistry reg;
  reg.add("w", w);
  AdamOptimizer opt(reg, /*lr=*/0, /*weight_decay=*/Real(0.01), /*clip_norm=*/100);
  Tape tape;
  WatchScope ws(tape, reg);
  Tensor loss = sum(square(w));
  tape.backward(loss);
  opt.step(tape);
  for (int i = 0; i < w.numel(); ++i)
    CHECK(w[i] == doctest::Approx(before[i] * (1 - 0.01)).epsilon(1e-14));
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  Tensor w({2}, {Real(3), Real(4)});  // gradient of sum(square) is (6, 8), norm 10
  ParamRegistry reg;
  reg.add("w", w);
  AdamOptimizer opt(reg, 0, 0, /*clip_norm=*/Real(5));
  Tape tape;
  WatchScope ws(tape, reg);
  tape.backward(sum(square(w)));
  const Real norm = opt.step(tape);
  CHECK(norm == doctest::Approx(10).epsilon(1e-12));
}
