#pragma once

#include "reswm/config.hpp"
#include "reswm/nn.hpp"
#include "reswm/replay.hpp"

namespace reswm {

// RSSM state for a batch of N rollouts. sigma > 0 elementwise (softplus +
// floor); stoch was drawn from N(mu, diag(sigma^2)) by reparameterization.
struct LatentState {
  Tensor h;      // [N, h_dim]
  Tensor stoch;  // [N, stoch_dim]
  Tensor mu;     // [N, stoch_dim]
  Tensor sigma;  // [N, stoch_dim]

  int batch() const { return h.rows(); }
  Tensor feature() const;  // concat(h, stoch) [N, h_dim + stoch_dim]
};

struct ModelLossComponents {
  Real recon = 0;
  Real reward = 0;
  Real kl = 0;
  Real total = 0;
};

// Observation difference encoder, residual-conditioned RSSM, observation
// decoder and reward head, plus the KL-balanced model loss.
class WorldModel {
 public:
  WorldModel(const Config& cfg, CounterRng& rng);
  WorldModel(const WorldModel&) = delete;
  WorldModel& operator=(const WorldModel&) = delete;

  const Config& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  int action_dim() const { return adim_; }
  int feature_dim() const { return cfg_.h_dim + cfg_.stoch_dim; }

  // Conv feature stack; second=true selects f' (same tensors when Siamese).
  Tensor conv_features(const Tensor& frames, bool second = false) const;  // [N, conv_flat]
  // Last conv activation map before flattening, for attention extraction.
  Tensor conv_activation(const Tensor& frames, bool second = false) const;  // [N, C2, 3, 3]

  // z = LN(FC(f(o_t) - f'(o_prev))). With no_odl set, z = LN(FC(f(o_t))).
  Tensor encode_diff(const Tensor& o_t, const Tensor& o_prev) const;  // [N, z_dim]
  // Pre-affine layer-norm input, exposed for the antisymmetry invariant.
  Tensor encode_diff_pre_affine(const Tensor& o_t, const Tensor& o_prev) const;

  LatentState initial_state(int n) const;

  // Shared recurrent path: h' = cell(h, [stoch, delta_a]).
  Tensor recurrent(const LatentState& prev, const Tensor& delta_a) const;

  LatentState posterior_update(const LatentState& prev, const Tensor& delta_a, const Tensor& z,
                               const Tensor& noise) const;
  LatentState prior_transition(const LatentState& prev, const Tensor& delta_a,
                               const Tensor& noise) const;
  // Prior parameters from an already-computed h' (shares h with a posterior).
  std::pair<Tensor, Tensor> prior_params(const Tensor& h_next) const;
  std::pair<Tensor, Tensor> posterior_params(const Tensor& h_next, const Tensor& z) const;

  Tensor decode_observation(const LatentState& s) const;        // [N,1,H,W] mean
  Tensor decode_features(const Tensor& feat) const;             // same, from concat(h,stoch)
  Tensor predict_reward(const LatentState& s, const Tensor& delta_a) const;  // [N,1] mean
  Tensor predict_reward_features(const Tensor& feat_delta) const;            // [N,1]

  // Posterior unroll over a batch; states are returned per step (time-major
  // rows match the batch layout).
  std::vector<LatentState> observe(const SequenceBatch& batch, CounterRng& rng) const;

  // Joint model objective: recon + reward NLL + beta * balanced KL. When
  // states_out is given the per-step posterior states are returned so callers
  // can reuse them (detached) as imagination starts.
  Tensor model_loss(const SequenceBatch& batch, CounterRng& rng, ModelLossComponents* comps,
                    std::vector<LatentState>* states_out = nullptr) const;

  // Builds the Gaussian noise tensor for one reparameterized sample.
  Tensor stoch_noise(int n, CounterRng& rng) const { return randn({n, cfg_.stoch_dim}, rng); }

 private:
  Tensor head_sigma(const Tensor& raw) const;

  Config cfg_;
  int adim_;
  ParamRegistry params_;

  Conv2d enc1_, enc2_;    // f
  Conv2d enc1b_, enc2b_;  // f' (aliases f when Siamese)
  Linear diff_fc_;
  LayerNorm diff_ln_;
  GRUCell cell_;
  Linear prior_hidden_, prior_out_;
  Linear post_hidden_, post_out_;
  Linear dec_fc_;
  Deconv2d dec1_, dec2_;
  Linear reward_hidden_, reward_out_;
  Tensor init_h_, init_stoch_;
};

}  // namespace reswm
