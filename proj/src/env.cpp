#include "reswm/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reswm {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDt = 0.05;
constexpr double kGravity = 10.0;
constexpr double kLength = 1.0;
constexpr double kMass = 1.0;
constexpr double kMaxSpeed = 8.0;
constexpr double kTorqueScale = 2.0;

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

void check_action(Task task, const std::vector<double>& action) {
  if (static_cast<int>(action.size()) != action_dim(task))
    throw std::invalid_argument("env_step: action dimension " + std::to_string(action.size()) +
                                " does not match task " + task_name(task));
  for (double a : action)
    if (!(a >= -1.0 && a <= 1.0))
      throw std::invalid_argument("env_step: action component " + std::to_string(a) +
                                  " outside [-1,1]");
}

// Splats a point with bilinear weights, saturating at 1.
void splat(Frame& f, double r, double c, double intensity) {
  int r0 = static_cast<int>(std::floor(r));
  int c0 = static_cast<int>(std::floor(c));
  double fr = r - r0, fc = c - c0;
  const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
  const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
  const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
  for (int i = 0; i < 4; ++i) {
    if (rr[i] < 0 || rr[i] >= f.height || cc[i] < 0 || cc[i] >= f.width) continue;
    Real& px = f.at(rr[i], cc[i]);
    px = static_cast<Real>(std::min(1.0, static_cast<double>(px) + intensity * w[i]));
  }
}

}  // namespace

Task parse_task(const std::string& name) {
  if (name == "pendulum") return Task::pendulum;
  if (name == "pointmass") return Task::pointmass;
  throw std::invalid_argument("unknown task: " + name);
}

std::string task_name(Task t) { return t == Task::pendulum ? "pendulum" : "pointmass"; }

int action_dim(Task t) { return t == Task::pendulum ? 1 : 2; }

double wrap_angle(double theta) {
  double t = std::fmod(theta + kPi, 2 * kPi);
  if (t <= 0) t += 2 * kPi;
  return t - kPi;
}

double pendulum_reward_min() { return -(kPi * kPi + 0.1 * 64.0 + 0.001 * 4.0); }

Tensor frame_tensor(const Frame& f) {
  Tensor t({1, 1, f.height, f.width});
  std::copy(f.pixels.begin(), f.pixels.end(), t.data());
  return t;
}

std::pair<EnvState, Frame> env_reset(Task task, std::uint64_t seed) {
  CounterRng rng(seed);
  EnvState s;
  s.task = task;
  if (task == Task::pendulum) {
    s.pend.theta = wrap_angle(rng.uniform(-kPi, kPi));
    s.pend.omega = 0;
  } else {
    s.pm.pos = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
    s.pm.vel = {0, 0};
    s.pm.goal = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
  }
  return {s, render(s)};
}

StepResult env_step(const EnvState& state, const std::vector<double>& action) {
  check_action(state.task, action);
  StepResult out;
  out.state = state;
  if (state.task == Task::pendulum) {
    const double u = kTorqueScale * action[0];
    double omega = state.pend.omega +
                   kDt * (3.0 * kGravity / (2.0 * kLength)) * std::sin(state.pend.theta) +
                   kDt * (3.0 / (kMass * kLength * kLength)) * u;
    omega = clampd(omega, -kMaxSpeed, kMaxSpeed);
    double theta = wrap_angle(state.pend.theta + kDt * omega);
    out.state.pend = {theta, omega};
    out.reward = -(theta * theta + 0.1 * omega * omega + 0.001 * u * u);
  } else {
    PointMassState pm = state.pm;
    for (int i = 0; i < 2; ++i) {
      pm.vel[i] = clampd(0.95 * pm.vel[i] + kDt * action[static_cast<size_t>(i)] * 10.0, -2.0, 2.0);
      double p = pm.pos[i] + kDt * pm.vel[i];
      if (p < -1.0 || p > 1.0) {
        p = clampd(p, -1.0, 1.0);
        pm.vel[i] = 0;  // wall contact
      }
      pm.pos[i] = p;
    }
    out.state.pm = pm;
    const double dx = pm.pos[0] - pm.goal[0], dy = pm.pos[1] - pm.goal[1];
    out.reward = -std::sqrt(dx * dx + dy * dy);
  }
  out.state.step_count = state.step_count + 1;
  out.done = out.state.step_count >= kEpisodeLen;
  out.frame = render(out.state);
  return out;
}

Frame render(const EnvState& state) {
  Frame f;
  if (state.task == Task::pendulum) {
    // Rod of length 6 px from the image center along theta; theta = 0 is up.
    const double cr = (kFrameSize - 1) / 2.0, cc = (kFrameSize - 1) / 2.0;
    const double dr = -std::cos(state.pend.theta);
    const double dc = std::sin(state.pend.theta);
    const int samples = 48;
    for (int i = 0; i <= samples; ++i) {
      double t = 6.0 * i / samples;
      splat(f, cr + t * dr, cc + t * dc, 6.0 / samples);
    }
  } else {
    auto to_px = [](double p) { return (p + 1.0) / 2.0 * (kFrameSize - 1); };
    int gr = static_cast<int>(std::lround(to_px(state.pm.goal[1])));
    int gc = static_cast<int>(std::lround(to_px(state.pm.goal[0])));
    if (gr >= 0 && gr < kFrameSize && gc >= 0 && gc < kFrameSize)
      f.at(gr, gc) = std::max(f.at(gr, gc), Real(0.5));
    int br = static_cast<int>(std::floor(to_px(state.pm.pos[1])));
    int bc = static_cast<int>(std::floor(to_px(state.pm.pos[0])));
    for (int r = br; r < br + 2; ++r)
      for (int c = bc; c < bc + 2; ++c)
        if (r >= 0 && r < kFrameSize && c >= 0 && c < kFrameSize) f.at(r, c) = Real(1);
  }
  return f;
}

}  // namespace reswm
