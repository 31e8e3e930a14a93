#pragma once

#include <memory>
#include <string>

#include "reswm/agent.hpp"
#include "reswm/checkpoint.hpp"
#include "reswm/replay.hpp"
#include "reswm/worldmodel.hpp"

namespace reswm {

// Diagnostics from one gradient update (model, actor, critic).
struct TrainStepStats {
  double recon_loss = 0;
  double reward_loss = 0;
  double kl_loss = 0;
  double actor_loss = 0;
  double critic_loss = 0;
  double residual_kl = 0;
  double energy_term = 0;
  double mean_abs_delta_a = 0;
  double grad_norm_model = 0;
  double grad_norm_actor = 0;
  double grad_norm_critic = 0;
};

struct EvalResult {
  double mean = 0;
  double std_dev = 0;
};

// Owns the full training state (model, agent, optimizers, replay, RNG) and
// the run directory artifacts: config.resolved, manifest.json, metrics.csv
// and checkpoints/. All stochastic decisions during training come from one
// counter-based stream, so a (seed, counter) pair resumes bit-exactly.
class Trainer {
 public:
  Trainer(const Config& cfg, std::string run_dir);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Full training loop: seed episodes, interleaved collection and updates,
  // periodic evaluation rows and checkpoints, final checkpoint.
  void run();

  // One update each for world model, actor and critic from a replay batch.
  TrainStepStats train_step();

  // Deterministic greedy-policy evaluation; episode seeds are derived from
  // (config seed, env step) and do not touch the training stream.
  EvalResult evaluate();

  // One on-policy episode with exploration noise, pushed into replay.
  Episode collect_episode(std::uint64_t env_seed);
  // Random-action episode whose stored residuals stay consistent with the
  // action composition rule.
  Episode collect_seed_episode(std::uint64_t env_seed);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  const Config& config() const { return cfg_; }
  long long env_steps() const { return env_steps_; }
  WorldModel& model() { return *model_; }
  Agent& agent() { return *agent_; }
  AdamOptimizer& model_optimizer() { return *opt_model_; }
  AdamOptimizer& actor_optimizer() { return *opt_actor_; }
  AdamOptimizer& critic_optimizer() { return *opt_critic_; }
  ReplayBuffer& replay() { return replay_; }
  CounterRng& rng() { return rng_; }
  const std::string& run_dir() const { return run_dir_; }

 private:
  void write_metrics_row(long long step, const EvalResult& ev);
  void flush_accum(TrainStepStats* out);

  Config cfg_;
  std::string run_dir_;
  Task task_;
  CounterRng rng_;
  std::unique_ptr<WorldModel> model_;
  std::unique_ptr<Agent> agent_;
  std::unique_ptr<AdamOptimizer> opt_model_, opt_actor_, opt_critic_;
  ReplayBuffer replay_;
  long long env_steps_ = 0;

  TrainStepStats accum_;
  long long accum_n_ = 0;
};

}  // namespace reswm
