#include "reswm/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace reswm {

Tensor compose_action(const Tensor& a_prev, const Tensor& delta, bool absolute_mode) {
  if (!a_prev.same_shape(delta))
    throw std::invalid_argument("compose_action: shape mismatch " + shape_str(a_prev.shape) +
                                " vs " + shape_str(delta.shape));
  if (absolute_mode) return tanh(delta);
  return tanh(add(a_prev, delta));
}

std::vector<double> lambda_returns(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma, double lambda) {
  const size_t h = rewards.size();
  if (values.size() != h + 1)
    throw std::invalid_argument("lambda_returns: need H+1 values for H rewards, got " +
                                std::to_string(values.size()) + " for " + std::to_string(h));
  std::vector<double> returns(h);
  double next = values[h];
  for (size_t k = h; k-- > 0;) {
    returns[k] = rewards[k] + gamma * ((1 - lambda) * values[k + 1] + lambda * next);
    next = returns[k];
  }
  return returns;
}

Agent::Agent(const Config& cfg, int action_dim, int feature_dim, CounterRng& rng)
    : cfg_(cfg), adim_(action_dim), feat_dim_(feature_dim) {
  pi_hidden_.init(actor_params_, "actor/hidden", feature_dim + action_dim, cfg.hidden_dim, rng);
  pi_out_.init(actor_params_, "actor/out", cfg.hidden_dim, 2 * action_dim, rng);
  // Start the residual std near sigma_delta (inverse of the bounded sigmoid
  // parameterization used in sample_residual).
  const double frac = std::min(
      0.999, std::max(1e-6, (cfg.sigma_delta - cfg.sigma_floor) / (cfg.sigma_max - cfg.sigma_floor)));
  const Real raw0 = static_cast<Real>(std::log(frac / (1.0 - frac)));
  for (int i = 0; i < action_dim; ++i) pi_out_.b[action_dim + i] = raw0;
  v_hidden_.init(critic_params_, "critic/hidden", feature_dim, cfg.hidden_dim, rng);
  v_out_.init(critic_params_, "critic/out", cfg.hidden_dim, 1, rng);
  tv_hidden_.init(target_params_, "critic_target/hidden", feature_dim, cfg.hidden_dim, rng);
  tv_out_.init(target_params_, "critic_target/out", cfg.hidden_dim, 1, rng);
  sync_target();
}

PolicySample Agent::sample_residual(const Tensor& feature, const Tensor& a_prev,
                                    const Tensor& noise) const {
  Tensor hidden = tanh(pi_hidden_(concat_cols(feature, a_prev)));
  Tensor out = pi_out_(hidden);
  PolicySample ps;
  ps.mu = scale(tanh(slice_cols(out, 0, adim_)), static_cast<Real>(cfg_.max_mu));
  // Bounded scale keeps imagined residuals inside the regime the dynamics and
  // reward heads were trained on; an unbounded head lets the actor inflate its
  // variance to harvest hallucinated model reward.
  ps.sigma = add_scalar(
      scale(sigmoid(slice_cols(out, adim_, adim_)),
            static_cast<Real>(cfg_.sigma_max - cfg_.sigma_floor)),
      static_cast<Real>(cfg_.sigma_floor));
  auto [sample, lp] = reparam_sample_gaussian(ps.mu, ps.sigma, noise);
  ps.delta = sample;
  ps.log_prob = lp;
  return ps;
}

Tensor Agent::value(const Tensor& feature) const { return v_out_(tanh(v_hidden_(feature))); }

Tensor Agent::target_value(const Tensor& feature) const {
  if (!cfg_.use_target_critic) return value(feature);
  return tv_out_(tanh(tv_hidden_(feature)));
}

void Agent::polyak_update() {
  const Real rate = static_cast<Real>(cfg_.polyak);
  for (size_t i = 0; i < critic_params_.size(); ++i) {
    Tensor& src = *critic_params_.refs()[i].tensor;
    Tensor& dst = *target_params_.refs()[i].tensor;
    dst.vec() += rate * (src.vec() - dst.vec());
  }
}

void Agent::sync_target() {
  for (size_t i = 0; i < critic_params_.size(); ++i)
    *target_params_.refs()[i].tensor->store = *critic_params_.refs()[i].tensor->store;
}

ImaginedTrajectory Agent::imagine_rollout(const WorldModel& model, const LatentState& start,
                                          const Tensor& a_prev, int horizon,
                                          CounterRng& rng) const {
  if (horizon < 1) throw std::invalid_argument("imagine_rollout: horizon must be >= 1");
  ImaginedTrajectory traj;
  LatentState s;
  s.h = start.h.constant();
  s.stoch = start.stoch.constant();
  s.mu = start.mu.constant();
  s.sigma = start.sigma.constant();
  Tensor a_k = a_prev.constant();
  const int n = s.batch();
  std::vector<Tensor> feats;
  traj.states.push_back(s);
  for (int k = 0; k < horizon; ++k) {
    Tensor feat = s.feature();
    feats.push_back(feat);
    PolicySample ps = sample_residual(feat, a_k, policy_noise(n, rng));
    Tensor action = compose_action(a_k, ps.delta, cfg_.no_residual);
    traj.residuals.push_back(ps.delta);
    traj.actions.push_back(action);
    traj.mus.push_back(ps.mu);
    traj.sigmas.push_back(ps.sigma);
    s = model.prior_transition(s, ps.delta, model.stoch_noise(n, rng));
    traj.states.push_back(s);
    a_k = action;
  }
  // Reward heads evaluated in one batched pass over (s_k, delta_k).
  Tensor all_in = concat_cols(concat_rows(feats), concat_rows(traj.residuals));
  Tensor all_r = model.predict_reward_features(all_in);
  for (int k = 0; k < horizon; ++k) traj.rewards.push_back(slice_rows(all_r, k * n, n));
  return traj;
}

std::vector<Tensor> Agent::lambda_returns_t(const std::vector<Tensor>& rewards,
                                            const std::vector<Tensor>& values) const {
  const size_t h = rewards.size();
  if (values.size() != h + 1)
    throw std::invalid_argument("lambda_returns_t: need H+1 values for H rewards");
  const Real gamma = static_cast<Real>(cfg_.gamma);
  const Real lambda = static_cast<Real>(cfg_.lambda);
  std::vector<Tensor> returns(h);
  Tensor next = values[h];
  for (size_t k = h; k-- > 0;) {
    Tensor mix = add(scale(values[k + 1], gamma * (1 - lambda)), scale(next, gamma * lambda));
    returns[k] = add(rewards[k], mix);
    next = returns[k];
  }
  return returns;
}

Tensor Agent::actor_loss(const ImaginedTrajectory& traj, const std::vector<Tensor>& returns,
                         ActorLossComponents* comps) const {
  Tensor ret_mean = mean(concat_rows(returns));
  Tensor loss = neg(ret_mean);

  const Real beta_kl = cfg_.no_reg ? Real(0) : static_cast<Real>(cfg_.beta_kl);
  const Real lam_d = cfg_.no_reg ? Real(0) : static_cast<Real>(cfg_.lambda_delta);
  Real kl_val = 0, energy_val = 0;
  if (beta_kl != 0 || comps) {
    Tensor mu_all = concat_rows(traj.mus);
    Tensor sig_all = concat_rows(traj.sigmas);
    Tensor prior_mu = Tensor(mu_all.shape);
    Tensor prior_sig = Tensor::full(sig_all.shape, static_cast<Real>(cfg_.sigma_delta));
    Tensor kl = mean(kl_diag_gaussian(mu_all, sig_all, prior_mu, prior_sig));
    kl_val = kl.value();
    if (beta_kl != 0) loss = add(loss, scale(kl, beta_kl));
  }
  if (lam_d != 0 || comps) {
    Tensor d_all = concat_rows(traj.residuals);
    Tensor energy = mean(row_sum(square(d_all)));
    energy_val = energy.value();
    if (lam_d != 0) loss = add(loss, scale(energy, lam_d));
  }
  if (cfg_.entropy_coef > 0) {
    Tensor ent = mean(row_sum(log(concat_rows(traj.sigmas))));
    loss = sub(loss, scale(ent, static_cast<Real>(cfg_.entropy_coef)));
  }
  if (comps) {
    comps->ret = ret_mean.value();
    comps->residual_kl = kl_val;
    comps->energy = energy_val;
    comps->total = loss.value();
    Real acc = 0;
    long long cnt = 0;
    for (const auto& d : traj.residuals) {
      acc += d.vec().cwiseAbs().sum();
      cnt += d.numel();
    }
    comps->mean_abs_delta = acc / static_cast<Real>(cnt);
  }
  return loss;
}

Tensor Agent::critic_loss(const ImaginedTrajectory& traj, const std::vector<Tensor>& returns) const {
  const int h = traj.horizon();
  std::vector<Tensor> feats;
  feats.reserve(static_cast<size_t>(h));
  for (int k = 0; k < h; ++k) feats.push_back(traj.states[static_cast<size_t>(k)].feature().constant());
  Tensor v = value(concat_rows(feats));
  std::vector<Tensor> detached;
  detached.reserve(returns.size());
  for (const auto& g : returns) detached.push_back(g.constant());
  Tensor err = sub(v, concat_rows(detached));
  return mean(square(err));
}

Agent::Carry Agent::initial_carry(const WorldModel& model) const {
  Carry c;
  c.state = model.initial_state(1);
  c.a_prev = Tensor({1, adim_});
  c.delta_prev = Tensor({1, adim_});
  c.first = true;
  return c;
}

std::vector<double> Agent::act(const WorldModel& model, Carry& carry, const Frame& o_t,
                               bool explore, CounterRng& rng) const {
  if (carry.first) {
    carry.prev_frame = o_t;
    carry.state = model.initial_state(1);
    carry.a_prev = Tensor({1, adim_});
    carry.delta_prev = Tensor({1, adim_});
  }
  Tensor z = model.encode_diff(frame_tensor(o_t), frame_tensor(carry.prev_frame));
  Tensor post_noise = explore ? model.stoch_noise(1, rng) : Tensor({1, cfg_.stoch_dim});
  LatentState s = model.posterior_update(carry.state, carry.delta_prev, z, post_noise);
  Tensor pi_noise = explore ? policy_noise(1, rng) : Tensor({1, adim_});
  PolicySample ps = sample_residual(s.feature(), carry.a_prev, pi_noise);
  Tensor a = compose_action(carry.a_prev, ps.delta, cfg_.no_residual);
  carry.state = s;
  carry.a_prev = a;
  carry.delta_prev = ps.delta;
  carry.prev_frame = o_t;
  carry.first = false;
  std::vector<double> out(static_cast<size_t>(adim_));
  for (int i = 0; i < adim_; ++i) out[static_cast<size_t>(i)] = static_cast<double>(a[i]);
  return out;
}

}  // namespace reswm
