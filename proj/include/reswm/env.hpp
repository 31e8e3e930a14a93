#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reswm/rng.hpp"
#include "reswm/tensor.hpp"

namespace reswm {

constexpr int kFrameSize = 16;
constexpr int kEpisodeLen = 200;

enum class Task { pendulum, pointmass };

Task parse_task(const std::string& name);
std::string task_name(Task t);
int action_dim(Task t);

// H x W grayscale observation, values in [0,1], row-major.
struct Frame {
  int height = kFrameSize;
  int width = kFrameSize;
  std::vector<Real> pixels;

  Frame() : pixels(static_cast<size_t>(kFrameSize * kFrameSize), Real(0)) {}
  Real& at(int r, int c) { return pixels[static_cast<size_t>(r * width + c)]; }
  Real at(int r, int c) const { return pixels[static_cast<size_t>(r * width + c)]; }
};

struct PendulumState {
  double theta = 0;  // radians, 0 = upright, wrapped to (-pi, pi]
  double omega = 0;  // rad/s, clamped to [-8, 8]
};

struct PointMassState {
  std::array<double, 2> pos{};   // in [-1,1]^2
  std::array<double, 2> vel{};   // each component in [-2,2]
  std::array<double, 2> goal{};  // in [-0.8,0.8]^2
};

struct EnvState {
  Task task = Task::pendulum;
  PendulumState pend;
  PointMassState pm;
  int step_count = 0;
};

struct StepResult {
  EnvState state;
  Frame frame;
  double reward = 0;
  bool done = false;
};

std::pair<EnvState, Frame> env_reset(Task task, std::uint64_t seed);
StepResult env_step(const EnvState& state, const std::vector<double>& action);
Frame render(const EnvState& state);

double wrap_angle(double theta);  // to (-pi, pi]

Tensor frame_tensor(const Frame& f);  // [1,1,H,W]

// Per-step pendulum reward bounds: [-(pi^2 + 0.1*64 + 0.001*4), 0].
double pendulum_reward_min();

}  // namespace reswm
