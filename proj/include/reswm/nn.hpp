#pragma once

#include <string>

#include "reswm/ops.hpp"
#include "reswm/rng.hpp"

namespace reswm {

// Named references to the learnable tensors of a model part. Modules register
// their tensors once at construction; the registry never owns them, so module
// objects must outlive it and stay at a fixed address.
class ParamRegistry {
 public:
  void add(std::string name, Tensor& t) { refs_.push_back({std::move(name), &t}); }

  struct Ref {
    std::string name;
    Tensor* tensor;
  };
  const std::vector<Ref>& refs() const { return refs_; }
  size_t size() const { return refs_.size(); }

  Tensor* find(const std::string& name) const {
    for (const auto& r : refs_)
      if (r.name == name) return r.tensor;
    return nullptr;
  }

  long long total_count() const {
    long long n = 0;
    for (const auto& r : refs_) n += r.tensor->numel();
    return n;
  }

 private:
  std::vector<Ref> refs_;
};

// Marks every parameter of a group as a leaf on a tape for one pass.
class WatchScope {
 public:
  WatchScope(Tape& tape, const ParamRegistry& reg) : reg_(reg) {
    for (const auto& r : reg.refs()) r.tensor->node = tape.leaf(*r.tensor);
  }
  ~WatchScope() {
    for (const auto& r : reg_.refs()) r.tensor->node = -1;
  }
  WatchScope(const WatchScope&) = delete;
  WatchScope& operator=(const WatchScope&) = delete;

 private:
  const ParamRegistry& reg_;
};

Tensor randn(std::vector<int> shape, CounterRng& rng);
Tensor uniform_init(std::vector<int> shape, Real limit, CounterRng& rng);

struct Linear {
  Tensor w, b;  // [in, out], [out]

  void init(ParamRegistry& reg, const std::string& name, int in, int out, CounterRng& rng);
  Tensor operator()(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
};

struct Conv2d {
  Tensor w, b;  // [F,C,k,k], [F]
  int stride = 1;

  void init(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k, int stride,
            CounterRng& rng);
  Tensor operator()(const Tensor& x) const { return add_channel_bias(conv2d(x, w, stride), b); }
};

struct Deconv2d {
  Tensor w, b;  // [F,C,k,k], [C]
  int stride = 1;

  void init(ParamRegistry& reg, const std::string& name, int in_ch, int out_ch, int k, int stride,
            CounterRng& rng);
  Tensor operator()(const Tensor& x) const {
    return add_channel_bias(conv2d_transpose(x, w, stride), b);
  }
};

struct LayerNorm {
  Tensor gain, bias;  // [n], [n]
  Real epsilon = Real(1e-5);

  void init(ParamRegistry& reg, const std::string& name, int n);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, epsilon); }
};

// Gated recurrent update with fused gate projections.
struct GRUCell {
  Tensor wx, wh, b;  // [in, 3h], [h, 3h], [3h]
  int width = 0;

  void init(ParamRegistry& reg, const std::string& name, int in, int h, CounterRng& rng);
  Tensor operator()(const Tensor& h, const Tensor& x) const;
};

// Adam with decoupled weight decay: the decay multiplies weights directly and
// is independent of the learning rate. Gradients are clipped to a global norm
// over the whole group before the moment updates.
class AdamOptimizer {
 public:
  AdamOptimizer(const ParamRegistry& reg, Real lr, Real weight_decay, Real clip_norm,
                Real beta1 = Real(0.9), Real beta2 = Real(0.999), Real eps = Real(1e-8));

  // Applies one update from the gradients on `tape` (params must still be
  // watched). Returns the pre-clip global gradient norm.
  Real step(Tape& tape);

  Real lr = 0;
  Real weight_decay = 0;
  Real clip_norm = 0;
  Real beta1, beta2, eps;
  long long t = 0;

  // Exposed for checkpointing; parallel to the registry order.
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  const ParamRegistry& registry() const { return reg_; }

 private:
  const ParamRegistry& reg_;
  std::vector<Tensor> m_, v_;
};

}  // namespace reswm
