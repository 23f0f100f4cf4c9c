#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fbrl/rng.hpp"

namespace fbrl {

using Vec2f = Eigen::Vector2f;

// Deterministic 2-D point mass in a bounded arena. Velocity is the
// behavior projection: it feeds the backward representation, the density
// model and the entropy metric.
struct EnvParams {
  float dt = 0.05f;
  float accel_scale = 4.0f;
  float drag = 0.5f;
  float v_max = 2.0f;
  float p_max = 5.0f;
  int episode_len = 250;
};

struct Action {
  Vec2f accel = Vec2f::Zero();  // componentwise in [-1, 1]
};

struct EnvState {
  Vec2f pos = Vec2f::Zero();          // |pos_i| <= p_max
  Vec2f vel = Vec2f::Zero();          // |vel_i| <= v_max
  Vec2f prev_action = Vec2f::Zero();  // in [-1, 1]^2
  int step = 0;
};

// Downstream velocity-tracking task; evaluation-time only.
struct TaskSpec {
  Vec2f target_vel = Vec2f::Zero();
  float sigma_v = 0.3f;
};

struct StepResult {
  EnvState state;
  bool done = false;
};

// Position uniform in [-1, 1]^2, velocity and previous action zero.
EnvState env_reset(Rng& rng);

// v' = clip(v + dt * (accel_scale * a - drag * v)), p' = clip(p + dt * v').
// Throws EnvError on non-finite actions; actions are clipped to [-1, 1].
StepResult env_step(const EnvState& s, const Action& a,
                    const EnvParams& params = {});

// Behavior projection phi(s): the planar velocity, returned exactly.
Vec2f project(const EnvState& s);

// exp(-(||v' - v*|| / sigma_v)^2), in (0, 1].
float task_reward(const EnvState& next, const TaskSpec& task);

// Action-rate penalty -0.1 * ||a - a_prev||^2. The joint-acceleration and
// feet-slide terms of the generic regularizer interface are identically 0
// for this environment.
float reg_reward(const EnvState& next, const Action& a,
                 const Vec2f& prev_action);

// Pinned at the arena boundary with outward velocity. Degenerate states are
// kept out of the goal buffer.
bool is_degenerate(const EnvState& s, const EnvParams& params = {});

// Network observation: (pos / p_max, vel / v_max, prev_action).
Eigen::Matrix<float, 6, 1> observation(const EnvState& s,
                                       const EnvParams& params = {});

inline constexpr int kObsDim = 6;
inline constexpr int kActDim = 2;
inline constexpr int kProjDim = 2;

// 17 evaluation commands: the origin plus four headings on each of the
// rings ||v*|| in {0.4, 0.8, 1.2, 1.6}.
std::vector<TaskSpec> task_grid();

}  // namespace fbrl
