#include "reswm/nn.hpp"

#include <cmath>

namespace reswm {

Tensor randn(std::vector<int> shape, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : *t.store) v = static_cast<Real>(rng.normal());
  return t;
}

Tensor uniform_init(std::vector<int> shape, Real limit, CounterRng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : *t.store) v = static_cast<Real>(rng.uniform(-limit, limit));
  return t;
}

void Linear::init(ParamRegistry& reg, const std::string& name, int in, int out, CounterRng& rng) {
  Real limit = std::sqrt(Real(6) / static_cast<Real>(in + out));
  w = uniform_init({in, out}, limit, rng);
  b = Tensor({out});
  reg.add(name + "/w", w);
  reg.add(name + "/b", b);
}

void Conv2d::init(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k,
                  int stride_, CounterRng& rng) {
  stride = stride_;
  int fan_in = in_ch * k * k, fan_out = out_ch * k * k;
  Real limit = std::sqrt(Real(6) / static_cast<Real>(fan_in + fan_out));
  w = uniform_init({out_ch, in_ch, k, k}, limit, rng);
  b = Tensor({out_ch});
  reg.add(name + "/w", w);
  reg.add(name + "/b", b);
}

void Deconv2d::init(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k,
                    int stride_, CounterRng& rng) {
  stride = stride_;
  int fan_in = in_ch * k * k, fan_out = out_ch * k * k;
  Real limit = std::sqrt(Real(6) / static_cast<Real>(fan_in + fan_out));
  w = uniform_init({in_ch, out_ch, k, k}, limit, rng);
  b = Tensor({out_ch});
  reg.add(name + "/w", w);
  reg.add(name + "/b", b);
}

void LayerNorm::init(ParamRegistry& reg, const std::string& name, int n) {
  gain = Tensor::full({n}, Real(1));
  bias = Tensor({n});
  reg.add(name + "/gain", gain);
  reg.add(name + "/bias", bias);
}

void GRUCell::init(ParamRegistry& reg, const std::string& name, int in, int h, CounterRng& rng) {
  width = h;
  Real lx = std::sqrt(Real(6) / static_cast<Real>(in + 3 * h));
  Real lh = std::sqrt(Real(6) / static_cast<Real>(h + 3 * h));
  wx = uniform_init({in, 3 * h}, lx, rng);
  wh = uniform_init({h, 3 * h}, lh, rng);
  b = Tensor({3 * h});
  reg.add(name + "/wx", wx);
  reg.add(name + "/wh", wh);
  reg.add(name + "/b", b);
}

Tensor GRUCell::operator()(const Tensor& h, const Tensor& x) const {
  Tensor gx = add_rowvec(matmul(x, wx), b);
  Tensor gh = matmul(h, wh);
  Tensor z = sigmoid(add(slice_cols(gx, 0, width), slice_cols(gh, 0, width)));
  Tensor r = sigmoid(add(slice_cols(gx, width, width), slice_cols(gh, width, width)));
  Tensor cand =
      tanh(add(slice_cols(gx, 2 * width, width), mul(r, slice_cols(gh, 2 * width, width))));
  Tensor keep = mul(sub(Tensor::full(z.shape, Real(1)), z), h);
  return add(keep, mul(z, cand));
}

AdamOptimizer::AdamOptimizer(const ParamRegistry& reg, Real lr_, Real weight_decay_, Real clip_norm_,
                             Real beta1_, Real beta2_, Real eps_)
    : lr(lr_), weight_decay(weight_decay_), clip_norm(clip_norm_), beta1(beta1_), beta2(beta2_),
      eps(eps_), reg_(reg) {
  for (const auto& r : reg.refs()) {
    m_.emplace_back(r.tensor->shape);
    v_.emplace_back(r.tensor->shape);
  }
}

Real AdamOptimizer::step(Tape& tape) {
  std::vector<Tensor> grads;
  grads.reserve(reg_.size());
  Real sq = 0;
  for (const auto& r : reg_.refs()) {
    grads.push_back(tape.gradient(*r.tensor));
    sq += grads.back().vec().squaredNorm();
  }
  const Real norm = std::sqrt(sq);
  const Real clip_scale =
      (clip_norm > 0 && norm > clip_norm) ? clip_norm / norm : Real(1);
  ++t;
  const Real bc1 = 1 - std::pow(beta1, static_cast<Real>(t));
  const Real bc2 = 1 - std::pow(beta2, static_cast<Real>(t));
  for (size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = *reg_.refs()[i].tensor;
    auto g = grads[i].vec() * clip_scale;
    m_[i].vec() = beta1 * m_[i].vec() + (1 - beta1) * g;
    v_[i].vec() = beta2 * v_[i].vec().array().matrix() + (1 - beta2) * g.cwiseProduct(g);
    if (weight_decay != 0) p.vec() *= (1 - weight_decay);
    p.vec().array() -=
        lr * (m_[i].vec().array() / bc1) / ((v_[i].vec().array() / bc2).sqrt() + eps);
  }
  return norm;
}

}  // namespace reswm
