#include "reswm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "reswm/tape.hpp"

namespace reswm {
namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr const char* kMetricsHeader =
    "env_step,eval_return_mean,eval_return_std,recon_loss,reward_loss,kl_loss,actor_loss,"
    "critic_loss,residual_kl,energy_term,mean_abs_delta_a,grad_norm_model,grad_norm_actor,"
    "grad_norm_critic";

void append_group(std::vector<NamedArray>& out, const std::string& prefix,
                  const ParamRegistry& reg) {
  for (const auto& r : reg.refs()) {
    NamedArray a;
    a.name = prefix + r.name;
    for (int d : r.tensor->shape) a.extents.push_back(static_cast<std::uint64_t>(d));
    a.values.assign(r.tensor->store->begin(), r.tensor->store->end());
    out.push_back(std::move(a));
  }
}

void append_adam(std::vector<NamedArray>& out, const std::string& prefix, AdamOptimizer& opt) {
  const auto& refs = opt.registry().refs();
  for (size_t i = 0; i < refs.size(); ++i) {
    for (int which = 0; which < 2; ++which) {
      const Tensor& t = which == 0 ? opt.moments_m()[i] : opt.moments_v()[i];
      NamedArray a;
      a.name = prefix + refs[i].name + (which == 0 ? "/m" : "/v");
      for (int d : t.shape) a.extents.push_back(static_cast<std::uint64_t>(d));
      a.values.assign(t.store->begin(), t.store->end());
      out.push_back(std::move(a));
    }
  }
  NamedArray t;
  t.name = prefix + "t";
  t.extents = {1};
  t.values = {static_cast<double>(opt.t)};
  out.push_back(std::move(t));
}

using ArrayMap = std::unordered_map<std::string, const NamedArray*>;

const NamedArray& require(const ArrayMap& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw std::runtime_error("checkpoint: missing array '" + name + "'");
  return *it->second;
}

void restore_group(const ArrayMap& m, const std::string& prefix, const ParamRegistry& reg) {
  for (const auto& r : reg.refs()) {
    const NamedArray& a = require(m, prefix + r.name);
    if (static_cast<long long>(a.values.size()) != r.tensor->numel())
      throw std::runtime_error("checkpoint: size mismatch for '" + a.name + "'");
    for (size_t k = 0; k < a.values.size(); ++k)
      (*r.tensor->store)[k] = static_cast<Real>(a.values[k]);
  }
}

void restore_adam(const ArrayMap& m, const std::string& prefix, AdamOptimizer& opt) {
  const auto& refs = opt.registry().refs();
  for (size_t i = 0; i < refs.size(); ++i) {
    for (int which = 0; which < 2; ++which) {
      const NamedArray& a = require(m, prefix + refs[i].name + (which == 0 ? "/m" : "/v"));
      Tensor& t = which == 0 ? opt.moments_m()[i] : opt.moments_v()[i];
      if (static_cast<long long>(a.values.size()) != t.numel())
        throw std::runtime_error("checkpoint: size mismatch for '" + a.name + "'");
      for (size_t k = 0; k < a.values.size(); ++k) (*t.store)[k] = static_cast<Real>(a.values[k]);
    }
  }
  opt.t = static_cast<long long>(require(m, prefix + "t").values.at(0));
}

}  // namespace

Trainer::Trainer(const Config& cfg, std::string run_dir)
    : cfg_(cfg),
      run_dir_(std::move(run_dir)),
      task_(parse_task(cfg.task)),
      rng_(cfg.seed),
      replay_(cfg.replay_capacity) {
  model_ = std::make_unique<WorldModel>(cfg_, rng_);
  agent_ = std::make_unique<Agent>(cfg_, model_->action_dim(), model_->feature_dim(), rng_);
  opt_model_ = std::make_unique<AdamOptimizer>(
      model_->params(), static_cast<Real>(cfg_.lr_model), static_cast<Real>(cfg_.weight_decay),
      static_cast<Real>(cfg_.grad_clip));
  opt_actor_ = std::make_unique<AdamOptimizer>(
      agent_->actor_params(), static_cast<Real>(cfg_.lr_actor),
      static_cast<Real>(cfg_.weight_decay), static_cast<Real>(cfg_.grad_clip));
  opt_critic_ = std::make_unique<AdamOptimizer>(
      agent_->critic_params(), static_cast<Real>(cfg_.lr_critic),
      static_cast<Real>(cfg_.weight_decay), static_cast<Real>(cfg_.grad_clip));
}

Episode Trainer::collect_seed_episode(std::uint64_t env_seed) {
  const int adim = model_->action_dim();
  auto [state, frame] = env_reset(task_, env_seed);
  Episode ep;
  std::vector<double> a_prev(static_cast<size_t>(adim), 0.0);
  for (int t = 0; t < kEpisodeLen; ++t) {
    ep.frames.push_back(frame);
    std::vector<double> action(static_cast<size_t>(adim));
    std::vector<double> delta(static_cast<size_t>(adim));
    for (int i = 0; i < adim; ++i) {
      const double u = rng_.uniform(-0.99, 0.99);
      action[static_cast<size_t>(i)] = u;
      // Invert the composition rule so stored residuals reproduce the action.
      delta[static_cast<size_t>(i)] =
          cfg_.no_residual ? std::atanh(u) : std::atanh(u) - a_prev[static_cast<size_t>(i)];
    }
    StepResult res = env_step(state, action);
    ep.actions.push_back(action);
    ep.residuals.push_back(delta);
    ep.rewards.push_back(res.reward);
    a_prev = action;
    state = res.state;
    frame = res.frame;
  }
  return ep;
}

Episode Trainer::collect_episode(std::uint64_t env_seed) {
  const int adim = model_->action_dim();
  auto [state, frame] = env_reset(task_, env_seed);
  Agent::Carry carry = agent_->initial_carry(*model_);
  Episode ep;
  for (int t = 0; t < kEpisodeLen; ++t) {
    ep.frames.push_back(frame);
    std::vector<double> action = agent_->act(*model_, carry, frame, /*explore=*/true, rng_);
    std::vector<double> delta(static_cast<size_t>(adim));
    for (int i = 0; i < adim; ++i)
      delta[static_cast<size_t>(i)] = static_cast<double>(carry.delta_prev[i]);
    StepResult res = env_step(state, action);
    ep.actions.push_back(std::move(action));
    ep.residuals.push_back(std::move(delta));
    ep.rewards.push_back(res.reward);
    state = res.state;
    frame = res.frame;
  }
  return ep;
}

EvalResult Trainer::evaluate() {
  std::vector<double> returns;
  returns.reserve(static_cast<size_t>(cfg_.eval_episodes));
  CounterRng unused(0);  // greedy control draws nothing
  for (int e = 0; e < cfg_.eval_episodes; ++e) {
    const std::uint64_t seed =
        mix64(cfg_.seed ^ mix64(static_cast<std::uint64_t>(env_steps_) * 2654435761ULL +
                                static_cast<std::uint64_t>(e)));
    auto [state, frame] = env_reset(task_, seed);
    Agent::Carry carry = agent_->initial_carry(*model_);
    double total = 0;
    for (int t = 0; t < kEpisodeLen; ++t) {
      std::vector<double> action = agent_->act(*model_, carry, frame, /*explore=*/false, unused);
      StepResult res = env_step(state, action);
      total += res.reward;
      state = res.state;
      frame = res.frame;
    }
    returns.push_back(total);
  }
  EvalResult ev;
  for (double r : returns) ev.mean += r;
  ev.mean /= static_cast<double>(returns.size());
  double var = 0;
  for (double r : returns) var += (r - ev.mean) * (r - ev.mean);
  ev.std_dev = std::sqrt(var / static_cast<double>(returns.size()));
  return ev;
}

TrainStepStats Trainer::train_step() {
  if (replay_.size() == 0) throw std::runtime_error("train_step: replay buffer is empty");
  const int b = cfg_.batch_b;
  const int l = cfg_.seq_len;
  const int adim = model_->action_dim();
  SequenceBatch batch = replay_.sample_sequences(b, l, rng_);
  TrainStepStats stats;

  // Phase 1: world model update.
  std::vector<LatentState> post;
  {
    Tape tape;
    WatchScope ws(tape, model_->params());
    ModelLossComponents mc;
    Tensor loss = model_->model_loss(batch, rng_, &mc, &post);
    if (!std::isfinite(mc.total))
      throw std::runtime_error("train_step: non-finite model loss (recon=" +
                               std::to_string(mc.recon) + " reward=" + std::to_string(mc.reward) +
                               " kl=" + std::to_string(mc.kl) + ")");
    tape.backward(loss);
    stats.grad_norm_model = static_cast<double>(opt_model_->step(tape));
    stats.recon_loss = mc.recon;
    stats.reward_loss = mc.reward;
    stats.kl_loss = mc.kl;
  }

  // Imagination starts: every imag_stride-th step of every window, chosen so
  // the stored previous action is always inside the window. Raw copies only;
  // the posterior tensors' tape is already gone.
  std::vector<int> steps;
  for (int s = cfg_.imag_stride - 1; s < l; s += cfg_.imag_stride) steps.push_back(s);
  if (steps.empty()) steps.push_back(l - 1);
  const int nsel = static_cast<int>(steps.size());
  const int n = nsel * b;
  LatentState start;
  start.h = Tensor({n, cfg_.h_dim});
  start.stoch = Tensor({n, cfg_.stoch_dim});
  start.mu = Tensor({n, cfg_.stoch_dim});
  start.sigma = Tensor({n, cfg_.stoch_dim});
  Tensor a_prev({n, adim});
  for (int k = 0; k < nsel; ++k) {
    const int s = steps[static_cast<size_t>(k)];
    const auto& ps = post[static_cast<size_t>(s)];
    auto copy_block = [&](const Tensor& src, Tensor& dst, int width) {
      std::copy(src.data(), src.data() + static_cast<size_t>(b) * width,
                dst.data() + static_cast<size_t>(k) * b * width);
    };
    copy_block(ps.h, start.h, cfg_.h_dim);
    copy_block(ps.stoch, start.stoch, cfg_.stoch_dim);
    copy_block(ps.mu, start.mu, cfg_.stoch_dim);
    copy_block(ps.sigma, start.sigma, cfg_.stoch_dim);
    if (s > 0)
      std::copy(batch.actions.data() + static_cast<size_t>(s - 1) * b * adim,
                batch.actions.data() + static_cast<size_t>(s) * b * adim,
                a_prev.data() + static_cast<size_t>(k) * b * adim);
  }

  // Phase 2: actor update through imagined rollouts.
  ImaginedTrajectory traj;
  std::vector<Tensor> returns;
  {
    Tape tape;
    WatchScope ws(tape, agent_->actor_params());
    traj = agent_->imagine_rollout(*model_, start, a_prev, cfg_.horizon, rng_);
    std::vector<Tensor> values;
    values.reserve(traj.states.size());
    for (const auto& s : traj.states) {
      Tensor feat = s.feature();
      values.push_back(cfg_.use_target_critic ? agent_->target_value(feat) : agent_->value(feat));
    }
    returns = agent_->lambda_returns_t(traj.rewards, values);
    ActorLossComponents ac;
    Tensor loss = agent_->actor_loss(traj, returns, &ac);
    if (!std::isfinite(ac.total))
      throw std::runtime_error("train_step: non-finite actor loss (return=" +
                               std::to_string(ac.ret) + " kl=" + std::to_string(ac.residual_kl) +
                               " energy=" + std::to_string(ac.energy) + ")");
    tape.backward(loss);
    stats.grad_norm_actor = static_cast<double>(opt_actor_->step(tape));
    stats.actor_loss = ac.total;
    stats.residual_kl = ac.residual_kl;
    stats.energy_term = ac.energy;
    stats.mean_abs_delta_a = ac.mean_abs_delta;
  }

  // Phase 3: critic regression onto detached returns.
  {
    Tape tape;
    WatchScope ws(tape, agent_->critic_params());
    Tensor loss = agent_->critic_loss(traj, returns);
    stats.critic_loss = static_cast<double>(loss.value());
    if (!std::isfinite(stats.critic_loss))
      throw std::runtime_error("train_step: non-finite critic loss");
    tape.backward(loss);
    stats.grad_norm_critic = static_cast<double>(opt_critic_->step(tape));
  }
  if (cfg_.use_target_critic) agent_->polyak_update();
  return stats;
}

void Trainer::flush_accum(TrainStepStats* out) {
  *out = TrainStepStats{};
  if (accum_n_ > 0) {
    const double inv = 1.0 / static_cast<double>(accum_n_);
    out->recon_loss = accum_.recon_loss * inv;
    out->reward_loss = accum_.reward_loss * inv;
    out->kl_loss = accum_.kl_loss * inv;
    out->actor_loss = accum_.actor_loss * inv;
    out->critic_loss = accum_.critic_loss * inv;
    out->residual_kl = accum_.residual_kl * inv;
    out->energy_term = accum_.energy_term * inv;
    out->mean_abs_delta_a = accum_.mean_abs_delta_a * inv;
    out->grad_norm_model = accum_.grad_norm_model * inv;
    out->grad_norm_actor = accum_.grad_norm_actor * inv;
    out->grad_norm_critic = accum_.grad_norm_critic * inv;
  }
  accum_ = TrainStepStats{};
  accum_n_ = 0;
}

void Trainer::write_metrics_row(long long step, const EvalResult& ev) {
  TrainStepStats avg;
  flush_accum(&avg);
  std::ofstream os(run_dir_ + "/metrics.csv", std::ios::app);
  if (!os) throw std::runtime_error("cannot open metrics.csv in " + run_dir_);
  os << step << ',' << fmt_double(ev.mean) << ',' << fmt_double(ev.std_dev) << ','
     << fmt_double(avg.recon_loss) << ',' << fmt_double(avg.reward_loss) << ','
     << fmt_double(avg.kl_loss) << ',' << fmt_double(avg.actor_loss) << ','
     << fmt_double(avg.critic_loss) << ',' << fmt_double(avg.residual_kl) << ','
     << fmt_double(avg.energy_term) << ',' << fmt_double(avg.mean_abs_delta_a) << ','
     << fmt_double(avg.grad_norm_model) << ',' << fmt_double(avg.grad_norm_actor) << ','
     << fmt_double(avg.grad_norm_critic) << '\n';
}

void Trainer::run() {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir_ + "/checkpoints");
  cfg_.save(run_dir_ + "/config.resolved");
  {
    std::ofstream mf(run_dir_ + "/manifest.json");
    mf << "{\n"
       << "  \"task\": \"" << cfg_.task << "\",\n"
       << "  \"seed\": " << cfg_.seed << ",\n"
       << "  \"total_env_steps\": " << cfg_.total_env_steps << ",\n"
       << "  \"artifacts\": [\"config.resolved\", \"metrics.csv\", \"checkpoints/\"]\n"
       << "}\n";
  }
  if (env_steps_ == 0) {
    std::ofstream os(run_dir_ + "/metrics.csv", std::ios::trunc);
    os << kMetricsHeader << '\n';
  }

  if (replay_.size() == 0)
    for (int i = 0; i < cfg_.seed_episodes; ++i) replay_.push_episode(collect_seed_episode(rng_.next_u64()));

  if (env_steps_ == 0) write_metrics_row(0, evaluate());
  long long next_eval = (env_steps_ / cfg_.eval_every + 1) * cfg_.eval_every;
  long long next_ckpt = (env_steps_ / cfg_.checkpoint_every + 1) * cfg_.checkpoint_every;

  while (env_steps_ < cfg_.total_env_steps) {
    replay_.push_episode(collect_episode(rng_.next_u64()));
    const long long before = env_steps_;
    env_steps_ += kEpisodeLen;
    const long long updates = env_steps_ / cfg_.train_every - before / cfg_.train_every;
    for (long long u = 0; u < updates; ++u) {
      TrainStepStats s = train_step();
      accum_.recon_loss += s.recon_loss;
      accum_.reward_loss += s.reward_loss;
      accum_.kl_loss += s.kl_loss;
      accum_.actor_loss += s.actor_loss;
      accum_.critic_loss += s.critic_loss;
      accum_.residual_kl += s.residual_kl;
      accum_.energy_term += s.energy_term;
      accum_.mean_abs_delta_a += s.mean_abs_delta_a;
      accum_.grad_norm_model += s.grad_norm_model;
      accum_.grad_norm_actor += s.grad_norm_actor;
      accum_.grad_norm_critic += s.grad_norm_critic;
      ++accum_n_;
    }
    if (env_steps_ >= next_eval) {
      write_metrics_row(env_steps_, evaluate());
      next_eval = (env_steps_ / cfg_.eval_every + 1) * cfg_.eval_every;
    }
    if (env_steps_ >= next_ckpt) {
      save_checkpoint(run_dir_ + "/checkpoints/step_" + std::to_string(env_steps_) + ".ckpt");
      next_ckpt = (env_steps_ / cfg_.checkpoint_every + 1) * cfg_.checkpoint_every;
    }
  }
  save_checkpoint(run_dir_ + "/final.ckpt");
}

void Trainer::save_checkpoint(const std::string& path) const {
  CheckpointData data;
  data.config_text = cfg_.to_text();
  append_group(data.params, "", model_->params());
  append_group(data.params, "", agent_->actor_params());
  append_group(data.params, "", agent_->critic_params());
  append_group(data.params, "", agent_->target_params());
  for (int i = 0; i < replay_.size(); ++i) {
    const Episode& ep = replay_.episode(i);
    const std::string base = "replay/" + std::to_string(i) + "/";
    const int n = ep.length();
    const int adim = static_cast<int>(ep.actions[0].size());
    NamedArray frames;
    frames.name = base + "frames";
    frames.extents = {static_cast<std::uint64_t>(n), kFrameSize, kFrameSize};
    frames.values.reserve(static_cast<size_t>(n) * kFrameSize * kFrameSize);
    for (const Frame& f : ep.frames)
      for (Real p : f.pixels) frames.values.push_back(static_cast<double>(p));
    data.params.push_back(std::move(frames));
    for (int which = 0; which < 2; ++which) {
      NamedArray arr;
      arr.name = base + (which == 0 ? "actions" : "residuals");
      arr.extents = {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(adim)};
      const auto& rows = which == 0 ? ep.actions : ep.residuals;
      for (const auto& row : rows) arr.values.insert(arr.values.end(), row.begin(), row.end());
      data.params.push_back(std::move(arr));
    }
    NamedArray rew;
    rew.name = base + "rewards";
    rew.extents = {static_cast<std::uint64_t>(n)};
    rew.values = ep.rewards;
    data.params.push_back(std::move(rew));
  }
  append_adam(data.optimizer, "adam_model/", *opt_model_);
  append_adam(data.optimizer, "adam_actor/", *opt_actor_);
  append_adam(data.optimizer, "adam_critic/", *opt_critic_);
  data.rng_seed = rng_.seed();
  data.rng_counter = rng_.counter();
  data.env_steps = static_cast<std::uint64_t>(env_steps_);
  write_checkpoint(path, data);
}

void Trainer::load_checkpoint(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  if (data.config_text != cfg_.to_text())
    throw std::runtime_error(
        "checkpoint: config mismatch; construct the trainer from the checkpoint's config");
  ArrayMap m;
  for (const auto& a : data.params) m.emplace(a.name, &a);
  restore_group(m, "", model_->params());
  restore_group(m, "", agent_->actor_params());
  restore_group(m, "", agent_->critic_params());
  restore_group(m, "", agent_->target_params());
  replay_ = ReplayBuffer(cfg_.replay_capacity);
  const int adim = model_->action_dim();
  for (int i = 0;; ++i) {
    const std::string base = "replay/" + std::to_string(i) + "/";
    auto it = m.find(base + "frames");
    if (it == m.end()) break;
    const NamedArray& frames = *it->second;
    const NamedArray& actions = require(m, base + "actions");
    const NamedArray& residuals = require(m, base + "residuals");
    const NamedArray& rewards = require(m, base + "rewards");
    const int n = static_cast<int>(frames.extents.at(0));
    Episode ep;
    for (int t = 0; t < n; ++t) {
      Frame f;
      for (int k = 0; k < kFrameSize * kFrameSize; ++k)
        f.pixels[static_cast<size_t>(k)] =
            static_cast<Real>(frames.values[static_cast<size_t>(t) * kFrameSize * kFrameSize + k]);
      ep.frames.push_back(std::move(f));
      auto row = [&](const NamedArray& a) {
        return std::vector<double>(a.values.begin() + static_cast<long>(t) * adim,
                                   a.values.begin() + static_cast<long>(t + 1) * adim);
      };
      ep.actions.push_back(row(actions));
      ep.residuals.push_back(row(residuals));
      ep.rewards.push_back(rewards.values[static_cast<size_t>(t)]);
    }
    replay_.push_episode(std::move(ep));
  }
  ArrayMap om;
  for (const auto& a : data.optimizer) om.emplace(a.name, &a);
  restore_adam(om, "adam_model/", *opt_model_);
  restore_adam(om, "adam_actor/", *opt_actor_);
  restore_adam(om, "adam_critic/", *opt_critic_);
  rng_.restore(data.rng_seed, data.rng_counter);
  env_steps_ = static_cast<long long>(data.env_steps);
  accum_ = TrainStepStats{};
  accum_n_ = 0;
}

}  // namespace reswm
