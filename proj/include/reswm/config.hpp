#pragma once

#include <cstdint>
#include <string>

namespace reswm {

// Resolved run configuration. Serializes to canonical key=value text (one
// per line, sorted by key) so a resolved config re-runs bit-identically.
struct Config {
  std::string task = "pendulum";
  std::uint64_t seed = 1;
  long long total_env_steps = 50000;

  // schedule
  int train_every = 5;
  int batch_b = 16;
  int seq_len = 32;
  int seed_episodes = 5;
  long long eval_every = 2500;
  int eval_episodes = 10;
  long long checkpoint_every = 10000;
  int replay_capacity = 500;

  // optimization
  double lr_model = 3e-4;
  double lr_actor = 8e-5;
  double lr_critic = 8e-5;
  double weight_decay = 1e-6;
  double grad_clip = 100.0;

  // world model
  int z_dim = 24;
  int h_dim = 48;
  int stoch_dim = 12;
  int hidden_dim = 48;
  int conv1_ch = 4;
  int conv2_ch = 8;
  bool siamese = true;
  double sigma_floor = 0.01;
  double free_nats = 3.0;
  double kl_alpha = 0.8;
  double kl_beta = 1.0;
  double recon_weight = 1.0;
  double reward_weight = 1.0;

  // agent
  double gamma = 0.99;
  double lambda = 0.95;
  int horizon = 20;
  double sigma_delta = 0.3;
  double sigma_max = 1.0;
  double beta_kl = 0.1;
  double lambda_delta = 0.01;
  double max_mu = 1.0;
  double polyak = 0.02;
  bool use_target_critic = true;
  double entropy_coef = 0.0;
  int imag_stride = 8;  // every imag_stride-th batch index seeds a rollout

  // ablation switches (full model = all off)
  bool no_residual = false;  // V1
  bool no_odl = false;       // V2
  bool no_reg = false;       // V3

  std::string to_text() const;
  static Config from_text(const std::string& text);
  static Config load(const std::string& path);
  void save(const std::string& path) const;
};

template <class F>
void visit_config(Config& c, F&& f) {
  f("batch_b", c.batch_b);
  f("beta_kl", c.beta_kl);
  f("checkpoint_every", c.checkpoint_every);
  f("conv1_ch", c.conv1_ch);
  f("conv2_ch", c.conv2_ch);
  f("entropy_coef", c.entropy_coef);
  f("eval_episodes", c.eval_episodes);
  f("eval_every", c.eval_every);
  f("free_nats", c.free_nats);
  f("gamma", c.gamma);
  f("grad_clip", c.grad_clip);
  f("h_dim", c.h_dim);
  f("hidden_dim", c.hidden_dim);
  f("horizon", c.horizon);
  f("imag_stride", c.imag_stride);
  f("kl_alpha", c.kl_alpha);
  f("kl_beta", c.kl_beta);
  f("lambda", c.lambda);
  f("lambda_delta", c.lambda_delta);
  f("lr_actor", c.lr_actor);
  f("lr_critic", c.lr_critic);
  f("lr_model", c.lr_model);
  f("max_mu", c.max_mu);
  f("no_odl", c.no_odl);
  f("no_reg", c.no_reg);
  f("no_residual", c.no_residual);
  f("polyak", c.polyak);
  f("recon_weight", c.recon_weight);
  f("replay_capacity", c.replay_capacity);
  f("reward_weight", c.reward_weight);
  f("seed", c.seed);
  f("seed_episodes", c.seed_episodes);
  f("seq_len", c.seq_len);
  f("sigma_delta", c.sigma_delta);
  f("sigma_floor", c.sigma_floor);
  f("sigma_max", c.sigma_max);
  f("siamese", c.siamese);
  f("stoch_dim", c.stoch_dim);
  f("task", c.task);
  f("total_env_steps", c.total_env_steps);
  f("train_every", c.train_every);
  f("use_target_critic", c.use_target_critic);
  f("weight_decay", c.weight_decay);
  f("z_dim", c.z_dim);
}

}  // namespace reswm
