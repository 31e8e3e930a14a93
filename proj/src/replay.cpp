#include "reswm/replay.hpp"

#include <numeric>
#include <stdexcept>

namespace reswm {

double Episode::total_reward() const { return std::accumulate(rewards.begin(), rewards.end(), 0.0); }

void ReplayBuffer::push_episode(Episode episode) {
  const int n = episode.length();
  if (n != kEpisodeLen) throw std::invalid_argument("push_episode: episode length " + std::to_string(n) + " != " + std::to_string(kEpisodeLen));
  if (static_cast<int>(episode.actions.size()) != n ||
      static_cast<int>(episode.residuals.size()) != n ||
      static_cast<int>(episode.rewards.size()) != n)
    throw std::invalid_argument("push_episode: malformed episode (array lengths differ)");
  const size_t adim = episode.actions[0].size();
  for (int t = 0; t < n; ++t) {
    if (episode.actions[static_cast<size_t>(t)].size() != adim ||
        episode.residuals[static_cast<size_t>(t)].size() != adim)
      throw std::invalid_argument("push_episode: malformed episode (action shape)");
  }
  episodes_.push_back(std::move(episode));
  while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
}

SequenceBatch ReplayBuffer::sample_sequences(int b, int l, CounterRng& rng) const {
  if (episodes_.empty() || episodes_.front().length() < l)
    throw std::runtime_error("sample_sequences: not enough data; collect more episodes first");
  const int adim = static_cast<int>(episodes_.front().actions[0].size());
  SequenceBatch batch;
  batch.b = b;
  batch.l = l;
  batch.frames = Tensor({l * b, 1, kFrameSize, kFrameSize});
  batch.actions = Tensor({l * b, adim});
  batch.residuals = Tensor({l * b, adim});
  batch.rewards = Tensor({l * b, 1});
  batch.is_first.assign(static_cast<size_t>(l * b), 0);
  const int px = kFrameSize * kFrameSize;
  for (int w = 0; w < b; ++w) {
    const Episode& ep = episodes_[rng.next_u64() % episodes_.size()];
    const int max_start = ep.length() - l;
    const int start = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_start + 1));
    for (int i = 0; i < l; ++i) {
      const int t = start + i;
      const int row = i * b + w;
      std::copy(ep.frames[static_cast<size_t>(t)].pixels.begin(),
                ep.frames[static_cast<size_t>(t)].pixels.end(), batch.frames.data() + row * px);
      for (int a = 0; a < adim; ++a) {
        batch.actions[row * adim + a] = static_cast<Real>(ep.actions[static_cast<size_t>(t)][static_cast<size_t>(a)]);
        batch.residuals[row * adim + a] = static_cast<Real>(ep.residuals[static_cast<size_t>(t)][static_cast<size_t>(a)]);
      }
      batch.rewards[row] = static_cast<Real>(ep.rewards[static_cast<size_t>(t)]);
      if (t == 0) batch.is_first[static_cast<size_t>(row)] = 1;
    }
  }
  return batch;
}

}  // namespace reswm
