#include "fbrl/env.hpp"

#include <cmath>
#include <limits>

#include "fbrl/errors.hpp"

namespace fbrl {

namespace {
inline float clipf(float v, float lo, float hi) {
  return std::min(std::max(v, lo), hi);
}
}  // namespace

EnvState env_reset(Rng& rng) {
  EnvState s;
  s.pos.x() = static_cast<float>(rng.uniform(-1.0, 1.0));
  s.pos.y() = static_cast<float>(rng.uniform(-1.0, 1.0));
  s.vel.setZero();
  s.prev_action.setZero();
  s.step = 0;
  return s;
}

StepResult env_step(const EnvState& s, const Action& a,
                    const EnvParams& params) {
  if (!a.accel.allFinite()) {
    throw EnvError("env_step: non-finite action");
  }
  Vec2f act(clipf(a.accel.x(), -1.0f, 1.0f), clipf(a.accel.y(), -1.0f, 1.0f));
  StepResult out;
  EnvState& n = out.state;
  for (int i = 0; i < 2; ++i) {
    const float v = s.vel[i] + params.dt * (params.accel_scale * act[i] -
                                            params.drag * s.vel[i]);
    n.vel[i] = clipf(v, -params.v_max, params.v_max);
    n.pos[i] = clipf(s.pos[i] + params.dt * n.vel[i], -params.p_max,
                     params.p_max);
  }
  n.prev_action = act;
  n.step = s.step + 1;
  out.done = n.step >= params.episode_len;
  return out;
}

Vec2f project(const EnvState& s) { return s.vel; }

float task_reward(const EnvState& next, const TaskSpec& task) {
  const double err = (next.vel - task.target_vel).cast<double>().norm();
  const double scaled = err / static_cast<double>(task.sigma_v);
  // exp underflows float for the largest in-arena errors; keep the reward
  // strictly positive.
  const double r = std::exp(-scaled * scaled);
  return static_cast<float>(
      std::max(r, static_cast<double>(std::numeric_limits<float>::denorm_min())));
}

float reg_reward(const EnvState& /*next*/, const Action& a,
                 const Vec2f& prev_action) {
  return -0.1f * (a.accel - prev_action).squaredNorm();
}

bool is_degenerate(const EnvState& s, const EnvParams& params) {
  for (int i = 0; i < 2; ++i) {
    if (std::abs(s.pos[i]) >= params.p_max && s.pos[i] * s.vel[i] > 0.0f) {
      return true;
    }
  }
  return false;
}

Eigen::Matrix<float, 6, 1> observation(const EnvState& s,
                                       const EnvParams& params) {
  Eigen::Matrix<float, 6, 1> obs;
  obs << s.pos.x() / params.p_max, s.pos.y() / params.p_max,
      s.vel.x() / params.v_max, s.vel.y() / params.v_max, s.prev_action.x(),
      s.prev_action.y();
  return obs;
}

std::vector<TaskSpec> task_grid() {
  std::vector<TaskSpec> tasks;
  tasks.push_back(TaskSpec{});  // stand still
  const float rings[] = {0.4f, 0.8f, 1.2f, 1.6f};
  for (float r : rings) {
    tasks.push_back(TaskSpec{Vec2f(r, 0.0f), 0.3f});
    tasks.push_back(TaskSpec{Vec2f(0.0f, r), 0.3f});
    tasks.push_back(TaskSpec{Vec2f(-r, 0.0f), 0.3f});
    tasks.push_back(TaskSpec{Vec2f(0.0f, -r), 0.3f});
  }
  return tasks;
}

}  // namespace fbrl
