#include <doctest.h>

#include "reswm/replay.hpp"

using namespace reswm;

namespace {

Episode make_episode(double tag) {
  Episode ep;
  for (int t = 0; t < kEpisodeLen; ++t) {
    Frame f;
    f.at(0, 0) = static_cast<Real>(tag);
    f.at(0, 1) = static_cast<Real>(t);
    ep.frames.push_back(f);
    ep.actions.push_back({tag + t});
    ep.residuals.push_back({0.5 * (tag + t)});
    ep.rewards.push_back(-t);
  }
  return ep;
}

}  // namespace

TEST_CASE("malformed episodes are rejected") {
  ReplayBuffer buf(4);
  Episode short_ep = make_episode(0);
  short_ep.frames.pop_back();
  short_ep.actions.pop_back();
  short_ep.residuals.pop_back();
  short_ep.rewards.pop_back();
  CHECK_THROWS(buf.push_episode(short_ep));
  Episode ragged = make_episode(0);
  ragged.actions[10] = {1.0, 2.0};
  CHECK_THROWS(buf.push_episode(ragged));
}

TEST_CASE("capacity eviction is first-in first-out") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push_episode(make_episode(i));
  CHECK(buf.size() == 3);
  CHECK(buf.episode(0).frames[0].at(0, 0) == Real(2));
  CHECK(buf.episode(2).frames[0].at(0, 0) == Real(4));
}

TEST_CASE("sampled windows are contiguous, time-major and tagged at true starts") {
  ReplayBuffer buf(4);
  for (int i = 0; i < 3; ++i) buf.push_episode(make_episode(100 * i));
  CounterRng rng(5);
  const int b = 6, l = 10;
  SequenceBatch batch = buf.sample_sequences(b, l, rng);
  CHECK(batch.b == b);
  CHECK(batch.l == l);
  CHECK(batch.frames.shape == std::vector<int>{l * b, 1, kFrameSize, kFrameSize});
  CHECK(batch.actions.shape == std::vector<int>{l * b, 1});
  for (int w = 0; w < b; ++w) {
    // Row (0, w) identifies episode tag and start step.
    const double tag = static_cast<double>(batch.frames[(0 * b + w) * kFrameSize * kFrameSize]);
    const double start = static_cast<double>(batch.frames[(0 * b + w) * kFrameSize * kFrameSize + 1]);
    CHECK(start + l <= kEpisodeLen);
    CHECK(batch.is_first[static_cast<size_t>(w)] == (start == 0 ? 1 : 0));
    for (int step = 0; step < l; ++step) {
      const int row = step * b + w;
      CHECK(static_cast<double>(batch.frames[row * kFrameSize * kFrameSize + 1]) ==
            doctest::Approx(start + step));
      CHECK(static_cast<double>(batch.actions[row]) == doctest::Approx(tag + start + step));
      CHECK(static_cast<double>(batch.residuals[row]) ==
            doctest::Approx(0.5 * (tag + start + step)));
      CHECK(static_cast<double>(batch.rewards[row]) == doctest::Approx(-(start + step)));
    }
  }
}

TEST_CASE("sampling is deterministic for a fixed generator state") {
  ReplayBuffer buf(4);
  for (int i = 0; i < 2; ++i) buf.push_episode(make_episode(i));
  CounterRng a(9), b(9);
  SequenceBatch s1 = buf.sample_sequences(4, 8, a);
  SequenceBatch s2 = buf.sample_sequences(4, 8, b);
  CHECK(*s1.frames.store == *s2.frames.store);
  CHECK(*s1.actions.store == *s2.actions.store);
}

TEST_CASE("sampling from an empty buffer or an over-long window fails") {
  ReplayBuffer buf(2);
  CounterRng rng(1);
  CHECK_THROWS(buf.sample_sequences(2, 8, rng));
  buf.push_episode(make_episode(0));
  CHECK_THROWS(buf.sample_sequences(2, kEpisodeLen + 1, rng));
}
