#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "reswm/env.hpp"
#include "reswm/trainer.hpp"

using namespace reswm;

namespace {

namespace fs = std::filesystem;

Config fast_config() {
  Config c;
  c.task = "pendulum";
  c.seed = 7;
  c.total_env_steps = 600;
  c.train_every = 100;
  c.batch_b = 4;
  c.seq_len = 8;
  c.seed_episodes = 1;
  c.eval_every = 200;
  c.eval_episodes = 1;
  c.checkpoint_every = 200;
  c.z_dim = 6;
  c.h_dim = 8;
  c.stoch_dim = 4;
  c.hidden_dim = 8;
  c.conv1_ch = 2;
  c.conv2_ch = 3;
  c.horizon = 4;
  c.imag_stride = 4;
  return c;
}

std::string fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("seed episodes store residuals consistent with the composition rule") {
  Config cfg = fast_config();
  Trainer tr(cfg, fresh_dir("reswm_tr_seedep"));
  Episode ep = tr.collect_seed_episode(123);
  REQUIRE(ep.actions.size() == static_cast<size_t>(kEpisodeLen));
  REQUIRE(ep.residuals.size() == ep.actions.size());
  double a_prev = 0;
  for (size_t t = 0; t < ep.actions.size(); ++t) {
    const double composed = std::tanh(a_prev + ep.residuals[t][0]);
    CHECK(ep.actions[t][0] == doctest::Approx(composed).epsilon(1e-9));
    CHECK(std::abs(ep.actions[t][0]) < 1.0);
    a_prev = ep.actions[t][0];
  }
}

TEST_CASE("exploration episodes also respect the composition rule") {
  Config cfg = fast_config();
  Trainer tr(cfg, fresh_dir("reswm_tr_expep"));
  tr.replay().push_episode(tr.collect_seed_episode(1));
  Episode ep = tr.collect_episode(55);
  double a_prev = 0;
  for (size_t t = 0; t < ep.actions.size(); ++t) {
    CHECK(ep.actions[t][0] ==
          doctest::Approx(std::tanh(a_prev + ep.residuals[t][0])).epsilon(1e-9));
    a_prev = ep.actions[t][0];
  }
  // Rewards recorded in the episode match a replayed rollout of its actions.
  auto [state, frame] = env_reset(Task::pendulum, 55);
  (void)frame;
  for (size_t t = 0; t < ep.actions.size(); ++t) {
    StepResult sr = env_step(state, ep.actions[t]);
    CHECK(sr.reward == doctest::Approx(ep.rewards[t]).epsilon(1e-12));
    state = sr.state;
  }
}

TEST_CASE("two runs with identical configs produce byte-identical artifacts") {
  Config cfg = fast_config();
  std::string d1 = fresh_dir("reswm_tr_det1");
  std::string d2 = fresh_dir("reswm_tr_det2");
  {
    Trainer t1(cfg, d1);
    t1.run();
  }
  {
    Trainer t2(cfg, d2);
    t2.run();
  }
  CHECK(slurp(d1 + "/metrics.csv") == slurp(d2 + "/metrics.csv"));
  CHECK(slurp(d1 + "/final.ckpt") == slurp(d2 + "/final.ckpt"));
  CHECK(slurp(d1 + "/config.resolved") == slurp(d2 + "/config.resolved"));

  // A different seed produces a different metrics stream.
  Config other = cfg;
  other.seed = 8;
  std::string d3 = fresh_dir("reswm_tr_det3");
  {
    Trainer t3(other, d3);
    t3.run();
  }
  CHECK(slurp(d1 + "/metrics.csv") != slurp(d3 + "/metrics.csv"));
}

TEST_CASE("resuming from a mid-run checkpoint matches the uninterrupted run bit-for-bit") {
  Config cfg = fast_config();
  std::string full_dir = fresh_dir("reswm_tr_full");
  {
    Trainer full(cfg, full_dir);
    full.run();
  }

  // Simulate an interruption: take the mid-run checkpoint the full run wrote
  // at step 200 plus the metrics rows up to that point, and continue in a
  // fresh directory.
  std::string resume_dir = fresh_dir("reswm_tr_resume");
  {
    std::istringstream rows(slurp(full_dir + "/metrics.csv"));
    std::ofstream partial(resume_dir + "/metrics.csv", std::ios::binary);
    std::string line;
    for (int i = 0; i < 3 && std::getline(rows, line); ++i) partial << line << "\n";
  }
  {
    Trainer resumed(cfg, resume_dir);
    resumed.load_checkpoint(full_dir + "/checkpoints/step_200.ckpt");
    CHECK(resumed.env_steps() == 200);
    resumed.run();
  }
  CHECK(slurp(full_dir + "/final.ckpt") ==
        slurp(resume_dir + "/final.ckpt"));
  CHECK(slurp(full_dir + "/metrics.csv") == slurp(resume_dir + "/metrics.csv"));
}

TEST_CASE("checkpoint loading restores every training component") {
  Config cfg = fast_config();
  std::string d = fresh_dir("reswm_tr_load");
  Trainer tr(cfg, d);
  tr.replay().push_episode(tr.collect_seed_episode(2));
  (void)tr.train_step();
  tr.save_checkpoint(d + "/snap.ckpt");
  const std::uint64_t ctr = tr.rng().counter();
  const double before = tr.evaluate().mean;

  Trainer other(cfg, fresh_dir("reswm_tr_load2"));
  other.load_checkpoint(d + "/snap.ckpt");
  CHECK(other.rng().counter() == ctr);
  CHECK(other.replay().size() == tr.replay().size());
  CHECK(other.evaluate().mean == doctest::Approx(before).epsilon(1e-12));

  // Both trainers take the same next step and agree on its diagnostics.
  TrainStepStats s1 = tr.train_step();
  TrainStepStats s2 = other.train_step();
  CHECK(s1.recon_loss == s2.recon_loss);
  CHECK(s1.actor_loss == s2.actor_loss);
  CHECK(s1.critic_loss == s2.critic_loss);
  CHECK(s1.grad_norm_model == s2.grad_norm_model);
}

TEST_CASE("checkpoint loading rejects a mismatched configuration") {
  Config cfg = fast_config();
  std::string d = fresh_dir("reswm_tr_mismatch");
  Trainer tr(cfg, d);
  tr.save_checkpoint(d + "/snap.ckpt");

  Config other = fast_config();
  other.sigma_delta = 0.123;
  Trainer bad(other, fresh_dir("reswm_tr_mismatch2"));
  CHECK_THROWS_WITH_AS(bad.load_checkpoint(d + "/snap.ckpt"), doctest::Contains("config"),
                       std::runtime_error);
}

TEST_CASE("train_step reports finite diagnostics and touches all three modules") {
  Config cfg = fast_config();
  Trainer tr(cfg, fresh_dir("reswm_tr_step"));
  tr.replay().push_episode(tr.collect_seed_episode(3));
  TrainStepStats s = tr.train_step();
  for (double v : {s.recon_loss, s.reward_loss, s.kl_loss, s.actor_loss, s.critic_loss,
                   s.residual_kl, s.energy_term, s.mean_abs_delta_a, s.grad_norm_model,
                   s.grad_norm_actor, s.grad_norm_critic})
    CHECK(std::isfinite(v));
  CHECK(s.recon_loss > 0);
  CHECK(s.kl_loss >= 0);
  CHECK(s.grad_norm_model > 0);
  CHECK(s.grad_norm_actor > 0);
  CHECK(s.grad_norm_critic > 0);
}
