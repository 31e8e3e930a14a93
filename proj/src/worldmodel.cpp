#include "reswm/worldmodel.hpp"

#include <stdexcept>

namespace reswm {

Tensor LatentState::feature() const { return concat_cols(h, stoch); }

WorldModel::WorldModel(const Config& cfg, CounterRng& rng) : cfg_(cfg) {
  adim_ = reswm::action_dim(parse_task(cfg.task));
  const int c1 = cfg.conv1_ch, c2 = cfg.conv2_ch;
  const int conv_flat = c2 * 3 * 3;
  enc1_.init(params_, "model/enc1", 1, c1, 4, 2, rng);   // 16 -> 7
  enc2_.init(params_, "model/enc2", c1, c2, 3, 2, rng);  // 7 -> 3
  if (cfg.siamese) {
    enc1b_ = enc1_;
    enc2b_ = enc2_;
  } else {
    enc1b_.init(params_, "model/enc1b", 1, c1, 4, 2, rng);
    enc2b_.init(params_, "model/enc2b", c1, c2, 3, 2, rng);
  }
  diff_fc_.init(params_, "model/diff_fc", conv_flat, cfg.z_dim, rng);
  diff_ln_.init(params_, "model/diff_ln", cfg.z_dim);
  cell_.init(params_, "model/cell", cfg.stoch_dim + adim_, cfg.h_dim, rng);
  prior_hidden_.init(params_, "model/prior_hidden", cfg.h_dim, cfg.hidden_dim, rng);
  prior_out_.init(params_, "model/prior_out", cfg.hidden_dim, 2 * cfg.stoch_dim, rng);
  post_hidden_.init(params_, "model/post_hidden", cfg.h_dim + cfg.z_dim, cfg.hidden_dim, rng);
  post_out_.init(params_, "model/post_out", cfg.hidden_dim, 2 * cfg.stoch_dim, rng);
  dec_fc_.init(params_, "model/dec_fc", feature_dim(), conv_flat, rng);
  dec1_.init(params_, "model/dec1", c2, c1, 3, 2, rng);  // 3 -> 7
  dec2_.init(params_, "model/dec2", c1, 1, 4, 2, rng);   // 7 -> 16
  reward_hidden_.init(params_, "model/reward_hidden", feature_dim() + adim_, cfg.hidden_dim, rng);
  reward_out_.init(params_, "model/reward_out", cfg.hidden_dim, 1, rng);
  init_h_ = Tensor({cfg.h_dim});
  init_stoch_ = Tensor({cfg.stoch_dim});
  params_.add("model/init_h", init_h_);
  params_.add("model/init_stoch", init_stoch_);
}

Tensor WorldModel::conv_features(const Tensor& frames, bool second) const {
  Tensor act = conv_activation(frames, second);
  return reshape(act, {act.dim(0), cfg_.conv2_ch * 3 * 3});
}

Tensor WorldModel::conv_activation(const Tensor& frames, bool second) const {
  // With Siamese encoders f' is f itself so the watched tensors are shared.
  const bool use_b = second && !cfg_.siamese;
  const Conv2d& e1 = use_b ? enc1b_ : enc1_;
  const Conv2d& e2 = use_b ? enc2b_ : enc2_;
  return tanh(e2(tanh(e1(frames))));
}

Tensor WorldModel::encode_diff_pre_affine(const Tensor& o_t, const Tensor& o_prev) const {
  if (!o_t.same_shape(o_prev))
    throw std::invalid_argument("encode_diff: frame shape mismatch " + shape_str(o_t.shape) +
                                " vs " + shape_str(o_prev.shape));
  Tensor proj;
  if (cfg_.no_odl) {
    proj = diff_fc_(conv_features(o_t));
  } else {
    proj = diff_fc_(sub(conv_features(o_t), conv_features(o_prev, true)));
  }
  Tensor ones = Tensor::full({cfg_.z_dim}, Real(1));
  Tensor zeros = Tensor({cfg_.z_dim});
  return layer_norm(proj, ones, zeros, diff_ln_.epsilon);
}

Tensor WorldModel::encode_diff(const Tensor& o_t, const Tensor& o_prev) const {
  Tensor pre = encode_diff_pre_affine(o_t, o_prev);
  const int m = pre.rows();
  return add_rowvec(mul(pre, bcast_row(diff_ln_.gain, m)), diff_ln_.bias);
}

LatentState WorldModel::initial_state(int n) const {
  LatentState s;
  s.h = bcast_row(init_h_, n);
  s.stoch = bcast_row(init_stoch_, n);
  s.mu = Tensor({n, cfg_.stoch_dim});
  s.sigma = Tensor::full({n, cfg_.stoch_dim}, Real(1));
  return s;
}

Tensor WorldModel::recurrent(const LatentState& prev, const Tensor& delta_a) const {
  return cell_(prev.h, concat_cols(prev.stoch, delta_a));
}

Tensor WorldModel::head_sigma(const Tensor& raw) const {
  return add_scalar(softplus(raw), static_cast<Real>(cfg_.sigma_floor));
}

std::pair<Tensor, Tensor> WorldModel::prior_params(const Tensor& h_next) const {
  Tensor hidden = tanh(prior_hidden_(h_next));
  Tensor out = prior_out_(hidden);
  return {slice_cols(out, 0, cfg_.stoch_dim),
          head_sigma(slice_cols(out, cfg_.stoch_dim, cfg_.stoch_dim))};
}

std::pair<Tensor, Tensor> WorldModel::posterior_params(const Tensor& h_next, const Tensor& z) const {
  Tensor hidden = tanh(post_hidden_(concat_cols(h_next, z)));
  Tensor out = post_out_(hidden);
  return {slice_cols(out, 0, cfg_.stoch_dim),
          head_sigma(slice_cols(out, cfg_.stoch_dim, cfg_.stoch_dim))};
}

LatentState WorldModel::posterior_update(const LatentState& prev, const Tensor& delta_a,
                                         const Tensor& z, const Tensor& noise) const {
  LatentState s;
  s.h = recurrent(prev, delta_a);
  auto [mu, sigma] = posterior_params(s.h, z);
  s.mu = mu;
  s.sigma = sigma;
  s.stoch = reparam_sample_gaussian(mu, sigma, noise).first;
  return s;
}

LatentState WorldModel::prior_transition(const LatentState& prev, const Tensor& delta_a,
                                         const Tensor& noise) const {
  LatentState s;
  s.h = recurrent(prev, delta_a);
  auto [mu, sigma] = prior_params(s.h);
  s.mu = mu;
  s.sigma = sigma;
  s.stoch = reparam_sample_gaussian(mu, sigma, noise).first;
  return s;
}

Tensor WorldModel::decode_features(const Tensor& feat) const {
  Tensor x = tanh(dec_fc_(feat));
  x = reshape(x, {feat.rows(), cfg_.conv2_ch, 3, 3});
  x = tanh(dec1_(x));
  return dec2_(x);
}

Tensor WorldModel::decode_observation(const LatentState& s) const {
  return decode_features(s.feature());
}

Tensor WorldModel::predict_reward_features(const Tensor& feat_delta) const {
  return reward_out_(tanh(reward_hidden_(feat_delta)));
}

Tensor WorldModel::predict_reward(const LatentState& s, const Tensor& delta_a) const {
  return predict_reward_features(concat_cols(s.feature(), delta_a));
}

namespace {

// o_prev[l*b + w] = frames[(l-1)*b + w] for l > 0, frames[w] at the first step.
Tensor shifted_prev_frames(const SequenceBatch& batch) {
  Tensor prev = batch.frames.clone();
  const int px = kFrameSize * kFrameSize;
  const int b = batch.b;
  for (int l = batch.l - 1; l >= 1; --l)
    std::copy(batch.frames.data() + (l - 1) * b * px, batch.frames.data() + l * b * px,
              prev.data() + l * b * px);
  return prev;
}

}  // namespace

std::vector<LatentState> WorldModel::observe(const SequenceBatch& batch, CounterRng& rng) const {
  if (batch.b <= 0 || batch.l <= 0) throw std::invalid_argument("observe: empty batch");
  Tensor z_all = encode_diff(batch.frames, shifted_prev_frames(batch));
  std::vector<LatentState> states;
  states.reserve(static_cast<size_t>(batch.l));
  LatentState prev = initial_state(batch.b);
  Tensor zero_delta({batch.b, adim_});
  for (int l = 0; l < batch.l; ++l) {
    Tensor delta_prev =
        l == 0 ? zero_delta : slice_rows(batch.residuals, (l - 1) * batch.b, batch.b).constant();
    Tensor z_l = slice_rows(z_all, l * batch.b, batch.b);
    states.push_back(posterior_update(prev, delta_prev, z_l, stoch_noise(batch.b, rng)));
    prev = states.back();
  }
  return states;
}

Tensor WorldModel::model_loss(const SequenceBatch& batch, CounterRng& rng,
                              ModelLossComponents* comps,
                              std::vector<LatentState>* states_out) const {
  if (batch.b <= 0 || batch.l <= 0) throw std::invalid_argument("model_loss: empty batch");
  const int b = batch.b, l = batch.l;
  Tensor z_all = encode_diff(batch.frames, shifted_prev_frames(batch));

  std::vector<Tensor> feats;
  feats.reserve(static_cast<size_t>(l));
  Tensor kl_total = Tensor::scalar(0);
  LatentState prev = initial_state(b);
  Tensor zero_delta({b, adim_});
  const Real fn = static_cast<Real>(cfg_.free_nats);
  const Real alpha = static_cast<Real>(cfg_.kl_alpha);
  for (int step = 0; step < l; ++step) {
    Tensor delta_prev =
        step == 0 ? zero_delta : slice_rows(batch.residuals, (step - 1) * b, b).constant();
    Tensor h_next = recurrent(prev, delta_prev);
    Tensor z_l = slice_rows(z_all, step * b, b);
    auto [mu_q, sig_q] = posterior_params(h_next, z_l);
    auto [mu_p, sig_p] = prior_params(h_next);

    // KL balancing: the detached copies change gradients, not values.
    Tensor kl_prior = mean(kl_diag_gaussian(mu_q.constant(), sig_q.constant(), mu_p, sig_p));
    Tensor kl_post = mean(kl_diag_gaussian(mu_q, sig_q, mu_p.constant(), sig_p.constant()));
    if (fn > 0) {
      kl_prior = maximum(kl_prior, fn);
      kl_post = maximum(kl_post, fn);
    }
    kl_total = add(kl_total, add(scale(kl_prior, alpha), scale(kl_post, 1 - alpha)));

    LatentState s;
    s.h = h_next;
    s.mu = mu_q;
    s.sigma = sig_q;
    s.stoch = reparam_sample_gaussian(mu_q, sig_q, stoch_noise(b, rng)).first;
    feats.push_back(s.feature());
    if (states_out) states_out->push_back(s);
    prev = s;
  }

  Tensor all_feats = concat_rows(feats);
  Tensor recon_mean = decode_features(all_feats);
  Tensor recon_err = sub(reshape(recon_mean, batch.frames.shape), batch.frames);
  Tensor recon = scale(sum(square(recon_err)), Real(0.5) / static_cast<Real>(b));

  Tensor reward_mean = predict_reward_features(concat_cols(all_feats, batch.residuals));
  Tensor reward_err = sub(reward_mean, batch.rewards);
  Tensor reward_nll = scale(sum(square(reward_err)), Real(0.5) / static_cast<Real>(b));

  Tensor total = add(add(scale(recon, static_cast<Real>(cfg_.recon_weight)),
                         scale(reward_nll, static_cast<Real>(cfg_.reward_weight))),
                     scale(kl_total, static_cast<Real>(cfg_.kl_beta)));
  if (comps) {
    comps->recon = recon.value();
    comps->reward = reward_nll.value();
    comps->kl = kl_total.value();
    comps->total = total.value();
  }
  return total;
}

}  // namespace reswm
