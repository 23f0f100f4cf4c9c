#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fbrl/env.hpp"
#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

struct Transition {
  EnvState s;
  Action a;
  EnvState s_next;
  float reg_reward = 0.0f;
  bool done = false;
  std::uint32_t episode = 0;
};

// Sampled indices into the buffer: row i of an FB batch is transition
// idx[i] plus an independently drawn future state, the next state of
// transition plus_idx[i].
struct FbIndexBatch {
  std::vector<std::uint32_t> idx;
  std::vector<std::uint32_t> plus_idx;
};

// Ring buffer of projected states feeding the density model. Degenerate
// states are rejected at admission.
class GoalBuffer {
 public:
  explicit GoalBuffer(std::size_t capacity, std::uint64_t seed);

  void push(const Vec2f& phi);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  // Uniform with replacement; empty buffer yields nullopt.
  std::optional<Matf> sample(std::size_t n);

  // All stored entries, oldest first. Used for flow fitting.
  Matf snapshot() const;

  Rng& rng() { return rng_; }
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::size_t capacity_;
  std::vector<Vec2f> data_;
  std::size_t cursor_ = 0;  // next write slot once full
  std::size_t size_ = 0;
  Rng rng_;
};

// Bounded FIFO transition store. Appends also feed the goal buffer with
// phi(s') of non-degenerate next states.
//
// Snapshot format (little-endian, 32-bit words unless noted): header
// "FBRB" magic (u32), version (u32), record count (u64), write cursor
// (u64); then one 84-byte record per transition in storage order:
//   s.pos[2] s.vel[2] s.prev_action[2] (f32), s.step (u32),
//   s_next.pos[2] s_next.vel[2] s_next.prev_action[2] (f32),
//   s_next.step (u32), a[2] (f32), reg_reward (f32), done (u32),
//   episode (u32).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t goal_capacity,
               std::uint64_t seed, const EnvParams& params = {});

  // Validates transition invariants; throws ConfigError with the reason on
  // violation. FIFO eviction when full.
  void append(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  bool ready(std::size_t n) const { return size_ >= n; }

  // (s, a, s') uniform over stored transitions, s+ uniform and independent
  // over stored next states. Underfull buffer yields nullopt.
  std::optional<FbIndexBatch> sample_fb_batch(std::size_t n);

  // Candidate goal pool for the explorer, (n x 2), uniform with
  // replacement from the goal buffer.
  std::optional<Matf> sample_goal_states(std::size_t n);

  // phi(s') of the most recent min(n, size) transitions, for the entropy
  // metric. Order is oldest-first within the window.
  Matf recent_projections(std::size_t n) const;

  GoalBuffer& goals() { return goals_; }
  const GoalBuffer& goals() const { return goals_; }
  Rng& rng() { return rng_; }

  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::size_t capacity_;
  EnvParams params_;
  std::vector<Transition> data_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  Rng rng_;
  GoalBuffer goals_;
};

}  // namespace fbrl
