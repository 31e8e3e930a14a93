#pragma once

#include <deque>

#include "reswm/env.hpp"

namespace reswm {

// One complete fixed-length rollout. actions[t] and residuals[t] were taken
// after observing frames[t]; rewards[t] is the resulting reward.
struct Episode {
  std::vector<Frame> frames;
  std::vector<std::vector<double>> actions;
  std::vector<std::vector<double>> residuals;
  std::vector<double> rewards;

  int length() const { return static_cast<int>(frames.size()); }
  double total_reward() const;
};

// B sequence windows of length L in time-major layout: row (l*B + b) holds
// step l of window b, so per-step slices are contiguous.
struct SequenceBatch {
  int b = 0;
  int l = 0;
  Tensor frames;     // [L*B, 1, H, W]
  Tensor actions;    // [L*B, A]
  Tensor residuals;  // [L*B, A]
  Tensor rewards;    // [L*B, 1]
  std::vector<std::uint8_t> is_first;  // L*B flags, true at true episode starts
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity) : capacity_(capacity) {}

  // Appends a complete episode; evicts the oldest once capacity is exceeded.
  void push_episode(Episode episode);

  // B windows chosen uniformly over (episode, start) pairs with
  // start <= length - L.
  SequenceBatch sample_sequences(int b, int l, CounterRng& rng) const;

  int size() const { return static_cast<int>(episodes_.size()); }
  int capacity() const { return capacity_; }
  const Episode& episode(int i) const { return episodes_[static_cast<size_t>(i)]; }

 private:
  int capacity_;
  std::deque<Episode> episodes_;
};

}  // namespace reswm
