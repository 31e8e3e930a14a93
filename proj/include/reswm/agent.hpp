#pragma once

#include "reswm/worldmodel.hpp"

namespace reswm {

// a = tanh(a_prev + delta); with absolute_mode (ablation V1) a = tanh(delta).
Tensor compose_action(const Tensor& a_prev, const Tensor& delta, bool absolute_mode = false);

// G_H = V_H; G_k = r_k + gamma * ((1-lambda) * V_{k+1} + lambda * G_{k+1}).
std::vector<double> lambda_returns(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double gamma, double lambda);

struct PolicySample {
  Tensor delta;     // [N, A]
  Tensor log_prob;  // [N, 1]
  Tensor mu;        // [N, A]
  Tensor sigma;     // [N, A]
};

// Imagined latent trajectory, wired for pathwise differentiation into the
// policy. states has H+1 entries (start included); the rest have H.
struct ImaginedTrajectory {
  std::vector<LatentState> states;
  std::vector<Tensor> residuals;  // [N, A]
  std::vector<Tensor> actions;    // [N, A]
  std::vector<Tensor> mus, sigmas;
  std::vector<Tensor> rewards;  // [N, 1]
  int horizon() const { return static_cast<int>(residuals.size()); }
};

struct ActorLossComponents {
  Real ret = 0;         // mean lambda-return
  Real residual_kl = 0; // mean KL to the zero-mean residual prior
  Real energy = 0;      // mean ||delta||^2
  Real total = 0;
  Real mean_abs_delta = 0;
};

class Agent {
 public:
  Agent(const Config& cfg, int action_dim, int feature_dim, CounterRng& rng);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const Config& config() const { return cfg_; }
  ParamRegistry& actor_params() { return actor_params_; }
  ParamRegistry& critic_params() { return critic_params_; }
  ParamRegistry& target_params() { return target_params_; }

  // Diagonal-Gaussian residual head conditioned on concat(feature, a_prev);
  // tanh-bounded mean, softplus std with floor.
  PolicySample sample_residual(const Tensor& feature, const Tensor& a_prev,
                               const Tensor& noise) const;
  Tensor policy_noise(int n, CounterRng& rng) const { return randn({n, adim_}, rng); }

  Tensor value(const Tensor& feature) const;         // [N, 1]
  Tensor target_value(const Tensor& feature) const;  // [N, 1]
  void polyak_update();                               // target <- target + rate*(critic-target)
  void sync_target();

  // Rolls the frozen prior dynamics forward H steps from detached start
  // states, sampling residuals from the policy and composing actions.
  ImaginedTrajectory imagine_rollout(const WorldModel& model, const LatentState& start,
                                     const Tensor& a_prev, int horizon, CounterRng& rng) const;

  // Differentiable lambda-returns over a trajectory: H tensors [N,1].
  std::vector<Tensor> lambda_returns_t(const std::vector<Tensor>& rewards,
                                       const std::vector<Tensor>& values) const;

  Tensor actor_loss(const ImaginedTrajectory& traj, const std::vector<Tensor>& returns,
                    ActorLossComponents* comps) const;
  Tensor critic_loss(const ImaginedTrajectory& traj, const std::vector<Tensor>& returns) const;

  // Real-environment control path carry.
  struct Carry {
    LatentState state;   // batch 1
    Tensor a_prev;       // [1, A]
    Tensor delta_prev;   // [1, A]
    Frame prev_frame;
    bool first = true;
  };
  Carry initial_carry(const WorldModel& model) const;
  // z = encode_diff(o_t, prev frame); s = posterior(prev s, prev delta, z);
  // delta sampled (explore) or mean; a = compose(prev a, delta).
  std::vector<double> act(const WorldModel& model, Carry& carry, const Frame& o_t, bool explore,
                          CounterRng& rng) const;

 private:
  Config cfg_;
  int adim_;
  int feat_dim_;
  ParamRegistry actor_params_, critic_params_, target_params_;
  Linear pi_hidden_, pi_out_;
  Linear v_hidden_, v_out_;
  Linear tv_hidden_, tv_out_;
};

}  // namespace reswm
