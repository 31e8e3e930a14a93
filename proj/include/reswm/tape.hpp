#pragma once

#include <functional>
#include <unordered_map>

#include "reswm/tensor.hpp"

namespace reswm {

// Reverse-mode tape. Operations append nodes in execution order, so the node
// list is already topologically sorted; backward walks it once in reverse.
// Gradient accumulators are additive: a tensor consumed by several ops
// receives the sum of all path gradients. Tapes are rebuilt per pass
// (define-by-run) and confined to one logical execution at a time.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<Real>&)>;

  Tape() {
    prev_ = active_;
    active_ = this;
  }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  int record(int out_numel, BackwardFn back) {
    nodes_.push_back({out_numel, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Leaf for a parameter (or input) tensor; deduped by storage identity.
  int leaf(const Tensor& t) {
    const void* key = t.store.get();
    auto it = leaf_ids_.find(key);
    if (it != leaf_ids_.end()) return it->second;
    int id = record(t.numel(), nullptr);
    leaf_ids_.emplace(key, id);
    return id;
  }

  // Accumulate into the gradient buffer of a node (lazily allocated).
  std::vector<Real>& grad_buf(int node) {
    auto& g = grads_[static_cast<size_t>(node)];
    if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), Real(0));
    return g;
  }

  void accumulate(int node, const Real* src, int n) {
    if (node < 0) return;
    auto& g = grad_buf(node);
    VecMap(g.data(), n) += ConstVecMap(src, n);
  }

  // Gradient of a scalar root w.r.t. every recorded tensor.
  void backward(const Tensor& root) {
    if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root.tracked()) throw std::invalid_argument("backward: root is not on the tape");
    grads_.assign(nodes_.size(), {});
    grad_buf(root.node)[0] = Real(1);
    for (int i = root.node; i >= 0; --i) {
      auto& g = grads_[static_cast<size_t>(i)];
      if (g.empty()) continue;
      if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back(*this, g);
    }
  }

  // Gradient for a tensor after backward(); zeros if the node was untouched.
  Tensor gradient(const Tensor& t) const {
    if (!t.tracked()) throw std::invalid_argument("gradient: tensor is not tracked");
    Tensor g(t.shape);
    const auto& buf = grads_[static_cast<size_t>(t.node)];
    if (!buf.empty()) std::copy(buf.begin(), buf.end(), g.store->begin());
    return g;
  }

  // node_id -> gradient values for every node touched by the last backward.
  std::unordered_map<int, std::vector<Real>> gradient_map() const {
    std::unordered_map<int, std::vector<Real>> m;
    for (size_t i = 0; i < grads_.size(); ++i)
      if (!grads_[i].empty()) m.emplace(static_cast<int>(i), grads_[i]);
    return m;
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    int numel;
    BackwardFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<Real>> grads_;
  std::unordered_map<const void*, int> leaf_ids_;
  Tape* prev_ = nullptr;
  static inline thread_local Tape* active_ = nullptr;
};

// Marks a tensor as a differentiation leaf on the active tape.
inline Tensor watch(const Tensor& t) {
  Tensor out = t;
  Tape* tp = Tape::active();
  if (tp) out.node = tp->leaf(t);
  return out;
}

}  // namespace reswm
