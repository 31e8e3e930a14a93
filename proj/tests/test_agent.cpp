#include <doctest.h>

#include <cmath>
#include <vector>

#include "reswm/agent.hpp"
#include "reswm/tape.hpp"

using namespace reswm;

namespace {

Config tiny_config() {
  Config c;
  c.z_dim = 6;
  c.h_dim = 8;
  c.stoch_dim = 4;
  c.hidden_dim = 8;
  c.conv1_ch = 2;
  c.conv2_ch = 3;
  c.horizon = 4;
  return c;
}

// n-step return G_k^{(n)} = sum_{i<n} gamma^i r_{k+i} + gamma^n V_{k+n}.
double n_step_return(const std::vector<double>& r, const std::vector<double>& v, size_t k, size_t n,
                     double gamma) {
  double g = 0, d = 1;
  for (size_t i = 0; i < n; ++i) {
    g += d * r[k + i];
    d *= gamma;
  }
  return g + d * v[k + n];
}

// Oracle built from the defining mixture of n-step returns rather than the
// backward recursion used by the implementation.
double lambda_return_oracle(const std::vector<double>& r, const std::vector<double>& v, size_t k,
                            double gamma, double lambda) {
  const size_t h = r.size();
  double g = 0, w = 1;
  for (size_t n = 1; n + k < h; ++n) {
    g += (1 - lambda) * w * n_step_return(r, v, k, n, gamma);
    w *= lambda;
  }
  return g + w * n_step_return(r, v, k, h - k, gamma);
}

}  // namespace

TEST_CASE("compose_action stays strictly inside (-1, 1) over many random pairs") {
  CounterRng rng(41);
  const int n = 100000;
  std::vector<Real> ap(static_cast<size_t>(n)), dl(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    ap[static_cast<size_t>(i)] = static_cast<Real>(rng.uniform(-1, 1));
    dl[static_cast<size_t>(i)] = static_cast<Real>(rng.uniform(-6, 6));
  }
  Tensor a({n, 1}, ap), d({n, 1}, dl);
  Tensor out = compose_action(a, d);
  for (int i = 0; i < n; ++i) {
    CHECK(out.data()[i] > -1.0);
    CHECK(out.data()[i] < 1.0);
    CHECK(out.data()[i] ==
          doctest::Approx(std::tanh(ap[static_cast<size_t>(i)] + dl[static_cast<size_t>(i)]))
              .epsilon(1e-12));
  }
}

TEST_CASE("compose_action with zero residual contracts toward zero") {
  CounterRng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Real prev = static_cast<Real>(rng.uniform(-0.999, 0.999));
    Tensor a({1, 1}, {prev}), d({1, 1}, {0});
    Tensor out = compose_action(a, d);
    CHECK(out.data()[0] == doctest::Approx(std::tanh(prev)).epsilon(1e-12));
    if (prev != 0) CHECK(std::abs(out.data()[0]) < std::abs(prev));
  }
}

TEST_CASE("compose_action absolute mode ignores the previous action") {
  Tensor a({2, 1}, {0.9, -0.7}), d({2, 1}, {0.3, -2.0});
  Tensor out = compose_action(a, d, /*absolute_mode=*/true);
  CHECK(out.data()[0] == doctest::Approx(std::tanh(0.3)).epsilon(1e-12));
  CHECK(out.data()[1] == doctest::Approx(std::tanh(-2.0)).epsilon(1e-12));
  Tensor bad({3, 1});
  CHECK_THROWS_AS((void)compose_action(bad, d), std::invalid_argument);
}

TEST_CASE("lambda returns match the n-step mixture oracle on random instances") {
  CounterRng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t h = 1 + static_cast<size_t>(rng.uniform() * 7.999);  // H in [1, 8]
    std::vector<double> r(h), v(h + 1);
    for (double& x : r) x = rng.uniform(-5, 5);
    for (double& x : v) x = rng.uniform(-5, 5);
    const double gamma = rng.uniform(0.1, 0.999);
    const double lambda = rng.uniform(0.0, 1.0);
    std::vector<double> got = lambda_returns(r, v, gamma, lambda);
    REQUIRE(got.size() == h);
    for (size_t k = 0; k < h; ++k)
      CHECK(got[k] == doctest::Approx(lambda_return_oracle(r, v, k, gamma, lambda)).epsilon(1e-10));
  }
}

TEST_CASE("lambda returns satisfy the lambda=0 and lambda=1 identities") {
  CounterRng rng(44);
  const size_t h = 6;
  std::vector<double> r(h), v(h + 1);
  for (double& x : r) x = rng.uniform(-3, 3);
  for (double& x : v) x = rng.uniform(-3, 3);
  const double gamma = 0.97;

  std::vector<double> g0 = lambda_returns(r, v, gamma, 0.0);
  for (size_t k = 0; k < h; ++k)
    CHECK(g0[k] == doctest::Approx(r[k] + gamma * v[k + 1]).epsilon(1e-12));

  std::vector<double> g1 = lambda_returns(r, v, gamma, 1.0);
  for (size_t k = 0; k < h; ++k) {
    double mc = 0, d = 1;
    for (size_t i = k; i < h; ++i) {
      mc += d * r[i];
      d *= gamma;
    }
    mc += d * v[h];
    CHECK(g1[k] == doctest::Approx(mc).epsilon(1e-12));
  }

  CHECK_THROWS_AS((void)lambda_returns(r, std::vector<double>(h), gamma, 0.5),
                  std::invalid_argument);
}

TEST_CASE("tensor lambda returns agree with the scalar recursion per batch row") {
  Config cfg = tiny_config();
  CounterRng rng(45);
  Agent agent(cfg, 1, cfg.h_dim + cfg.stoch_dim, rng);
  const int n = 3, h = 5;
  std::vector<Tensor> rewards, values;
  std::vector<std::vector<double>> rs(static_cast<size_t>(n)), vs(static_cast<size_t>(n));
  for (int t = 0; t <= h; ++t) {
    Tensor vv({n, 1});
    for (int i = 0; i < n; ++i) {
      vv.data()[i] = static_cast<Real>(rng.uniform(-4, 4));
      vs[static_cast<size_t>(i)].push_back(vv.data()[i]);
    }
    values.push_back(vv);
    if (t == h) break;
    Tensor rr({n, 1});
    for (int i = 0; i < n; ++i) {
      rr.data()[i] = static_cast<Real>(rng.uniform(-4, 4));
      rs[static_cast<size_t>(i)].push_back(rr.data()[i]);
    }
    rewards.push_back(rr);
  }
  std::vector<Tensor> got = agent.lambda_returns_t(rewards, values);
  REQUIRE(got.size() == static_cast<size_t>(h));
  for (int i = 0; i < n; ++i) {
    std::vector<double> want =
        lambda_returns(rs[static_cast<size_t>(i)], vs[static_cast<size_t>(i)], cfg.gamma,
                       cfg.lambda);
    for (int t = 0; t < h; ++t)
      CHECK(got[static_cast<size_t>(t)].data()[i] == doctest::Approx(want[static_cast<size_t>(t)])
                                                         .epsilon(1e-10));
  }
}

TEST_CASE("closed-form diagonal-Gaussian KL matches Monte Carlo estimates") {
  CounterRng rng(46);
  const int dim = 3;
  Tensor mu1({1, dim}, {0.4, -0.7, 1.2});
  Tensor s1({1, dim}, {0.8, 1.3, 0.5});
  Tensor mu2({1, dim}, {-0.2, 0.1, 0.9});
  Tensor s2({1, dim}, {1.1, 0.9, 0.7});
  const double closed = kl_diag_gaussian(mu1, s1, mu2, s2).data()[0];

  // KL(p||q) = E_p[log p(x) - log q(x)], estimated by sampling from p.
  const int samples = 200000;
  double acc = 0;
  for (int s = 0; s < samples; ++s) {
    double lp = 0, lq = 0;
    for (int j = 0; j < dim; ++j) {
      const double x = mu1.data()[j] + s1.data()[j] * rng.normal();
      const double z1 = (x - mu1.data()[j]) / s1.data()[j];
      const double z2 = (x - mu2.data()[j]) / s2.data()[j];
      lp += -0.5 * z1 * z1 - std::log(s1.data()[j]);
      lq += -0.5 * z2 * z2 - std::log(s2.data()[j]);
    }
    acc += lp - lq;
  }
  const double mc = acc / samples;
  CHECK(std::abs(closed - mc) / std::abs(closed) < 0.02);

  // KL of a distribution with itself is exactly zero.
  CHECK(kl_diag_gaussian(mu1, s1, mu1, s1).data()[0] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("imagined rollouts have consistent shapes and bounded actions") {
  Config cfg = tiny_config();
  CounterRng rng(47);
  WorldModel model(cfg, rng);
  Agent agent(cfg, 1, cfg.h_dim + cfg.stoch_dim, rng);
  LatentState start = model.initial_state(2);
  Tensor a_prev({2, 1}, {0.3, -0.5});
  ImaginedTrajectory traj = agent.imagine_rollout(model, start, a_prev, cfg.horizon, rng);
  CHECK(traj.horizon() == cfg.horizon);
  CHECK(traj.states.size() == static_cast<size_t>(cfg.horizon) + 1);
  for (const Tensor& a : traj.actions) {
    REQUIRE(a.shape == std::vector<int>({2, 1}));
    for (int i = 0; i < a.numel(); ++i) {
      CHECK(a.data()[i] > -1.0);
      CHECK(a.data()[i] < 1.0);
    }
  }
  for (const Tensor& s : traj.sigmas)
    for (int i = 0; i < s.numel(); ++i) {
      CHECK(s.data()[i] >= cfg.sigma_floor);
      CHECK(s.data()[i] <= cfg.sigma_max);
    }
}

TEST_CASE("actor and critic losses are finite and report their components") {
  Config cfg = tiny_config();
  CounterRng rng(48);
  WorldModel model(cfg, rng);
  Agent agent(cfg, 1, cfg.h_dim + cfg.stoch_dim, rng);
  LatentState start = model.initial_state(2);
  Tensor a_prev({2, 1});
  Tape tape;
  WatchScope wa(tape, agent.actor_params());
  WatchScope wc(tape, agent.critic_params());
  ImaginedTrajectory traj = agent.imagine_rollout(model, start, a_prev, cfg.horizon, rng);
  std::vector<Tensor> values;
  for (const LatentState& s : traj.states) values.push_back(agent.target_value(s.feature()));
  std::vector<Tensor> returns = agent.lambda_returns_t(traj.rewards, values);
  ActorLossComponents comps;
  Tensor al = agent.actor_loss(traj, returns, &comps);
  CHECK(std::isfinite(static_cast<double>(al.data()[0])));
  CHECK(std::isfinite(static_cast<double>(comps.ret)));
  CHECK(comps.residual_kl >= 0);
  CHECK(comps.energy >= 0);
  CHECK(comps.mean_abs_delta >= 0);
  Tensor cl = agent.critic_loss(traj, returns);
  CHECK(std::isfinite(static_cast<double>(cl.data()[0])));
  CHECK(cl.data()[0] >= 0);
  tape.backward(al);
}

TEST_CASE("target critic starts synchronized and tracks the critic under polyak updates") {
  Config cfg = tiny_config();
  CounterRng rng(49);
  Agent agent(cfg, 1, cfg.h_dim + cfg.stoch_dim, rng);
  Tensor feat({1, cfg.h_dim + cfg.stoch_dim});
  for (int i = 0; i < feat.numel(); ++i) feat.data()[i] = static_cast<Real>(rng.uniform(-1, 1));
  CHECK(agent.value(feat).data()[0] ==
        doctest::Approx(agent.target_value(feat).data()[0]).epsilon(1e-12));

  Tensor* w = agent.critic_params().find("critic/out/w");
  REQUIRE(w != nullptr);
  w->data()[0] += 1.0;
  const double before = agent.target_value(feat).data()[0];
  const double online = agent.value(feat).data()[0];
  agent.polyak_update();
  const double after = agent.target_value(feat).data()[0];
  // The target moves toward the online critic by a small fraction.
  CHECK(std::abs(after - online) < std::abs(before - online));
  CHECK(std::abs(after - before) < std::abs(online - before));
  agent.sync_target();
  CHECK(agent.target_value(feat).data()[0] == doctest::Approx(online).epsilon(1e-12));
}

TEST_CASE("environment-side acting is deterministic without exploration noise") {
  Config cfg = tiny_config();
  CounterRng rng(50);
  WorldModel model(cfg, rng);
  Agent agent(cfg, 1, cfg.h_dim + cfg.stoch_dim, rng);
  Frame f1, f2;
  CounterRng frng(51);
  for (Real& p : f1.pixels) p = static_cast<Real>(frng.uniform());
  for (Real& p : f2.pixels) p = static_cast<Real>(frng.uniform());

  Agent::Carry c1 = agent.initial_carry(model);
  Agent::Carry c2 = agent.initial_carry(model);
  CounterRng r1(60), r2(61);  // distinct streams; greedy acting must not consume them
  std::vector<double> a1 = agent.act(model, c1, f1, /*explore=*/false, r1);
  std::vector<double> a2 = agent.act(model, c2, f1, /*explore=*/false, r2);
  REQUIRE(a1.size() == 1);
  CHECK(a1[0] == a2[0]);
  CHECK(r1.counter() == 0);
  std::vector<double> b1 = agent.act(model, c1, f2, false, r1);
  std::vector<double> b2 = agent.act(model, c2, f2, false, r2);
  CHECK(b1[0] == b2[0]);
  CHECK(std::abs(a1[0]) < 1.0);
}
