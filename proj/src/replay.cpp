#include "fbrl/replay.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "fbrl/errors.hpp"

namespace fbrl {

namespace {

void check_state(const EnvState& s, const EnvParams& p, const char* label) {
  if (!s.pos.allFinite() || !s.vel.allFinite() || !s.prev_action.allFinite()) {
    throw ConfigError(std::string("transition rejected: non-finite ") + label);
  }
  const float tol = 1e-5f;
  if (s.pos.cwiseAbs().maxCoeff() > p.p_max + tol ||
      s.vel.cwiseAbs().maxCoeff() > p.v_max + tol) {
    throw ConfigError(std::string("transition rejected: ") + label +
                      " outside arena bounds");
  }
  if (s.step < 0) {
    throw ConfigError(std::string("transition rejected: ") + label +
                      " has negative step index");
  }
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

constexpr std::uint32_t kReplayMagic = 0x46425242;  // "FBRB"
constexpr std::uint32_t kGoalMagic = 0x46424742;    // "FBGB"
constexpr std::uint32_t kVersion = 1;

}  // namespace

GoalBuffer::GoalBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  data_.reserve(capacity);
}

void GoalBuffer::push(const Vec2f& phi) {
  if (size_ < capacity_) {
    data_.push_back(phi);
    ++size_;
  } else {
    data_[cursor_] = phi;
    cursor_ = (cursor_ + 1) % capacity_;
  }
}

std::optional<Matf> GoalBuffer::sample(std::size_t n) {
  if (size_ == 0) return std::nullopt;
  Matf out(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(rng_.bounded(size_));
    out.row(static_cast<Eigen::Index>(i)) = data_[j].transpose();
  }
  return out;
}

Matf GoalBuffer::snapshot() const {
  Matf out(static_cast<Eigen::Index>(size_), 2);
  for (std::size_t i = 0; i < size_; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data_[i].transpose();
  }
  return out;
}

void GoalBuffer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingArtifactError("cannot write goal buffer: " + path);
  write_pod(out, kGoalMagic);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(size_));
  write_pod(out, static_cast<std::uint64_t>(cursor_));
  const auto st = rng_.state();
  for (auto w : st) write_pod(out, w);
  for (std::size_t i = 0; i < size_; ++i) {
    write_pod(out, data_[i].x());
    write_pod(out, data_[i].y());
  }
  if (!out) throw MissingArtifactError("short write to " + path);
}

void GoalBuffer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read goal buffer: " + path);
  std::uint32_t magic = 0, version = 0;
  std::uint64_t count = 0, cursor = 0;
  read_pod(in, magic);
  read_pod(in, version);
  if (magic != kGoalMagic || version != kVersion) {
    throw MissingArtifactError("bad goal buffer header in " + path);
  }
  read_pod(in, count);
  read_pod(in, cursor);
  std::array<std::uint64_t, 4> st{};
  for (auto& w : st) read_pod(in, w);
  rng_.set_state(st);
  if (count > capacity_) {
    throw MissingArtifactError("goal buffer snapshot exceeds capacity");
  }
  data_.clear();
  data_.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    read_pod(in, data_[i].x());
    read_pod(in, data_[i].y());
  }
  size_ = count;
  cursor_ = cursor;
  if (!in) throw MissingArtifactError("short read from " + path);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t goal_capacity,
                           std::uint64_t seed, const EnvParams& params)
    : capacity_(capacity),
      params_(params),
      rng_(seed),
      goals_(goal_capacity, seed ^ 0x676f616cULL) {
  data_.reserve(std::min<std::size_t>(capacity, 1u << 20));
}

void ReplayBuffer::append(const Transition& t) {
  check_state(t.s, params_, "state");
  check_state(t.s_next, params_, "next state");
  if (!t.a.accel.allFinite() || t.a.accel.cwiseAbs().maxCoeff() > 1.0f) {
    throw ConfigError("transition rejected: action outside [-1, 1]");
  }
  if (!std::isfinite(t.reg_reward)) {
    throw ConfigError("transition rejected: non-finite reg reward");
  }
  if (size_ < capacity_) {
    data_.push_back(t);
    ++size_;
  } else {
    data_[cursor_] = t;
    cursor_ = (cursor_ + 1) % capacity_;
  }
  if (!is_degenerate(t.s_next, params_)) {
    goals_.push(project(t.s_next));
  }
}

std::optional<FbIndexBatch> ReplayBuffer::sample_fb_batch(std::size_t n) {
  if (size_ < n) return std::nullopt;
  FbIndexBatch batch;
  batch.idx.resize(n);
  batch.plus_idx.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.idx[i] = static_cast<std::uint32_t>(rng_.bounded(size_));
  }
  for (std::size_t i = 0; i < n; ++i) {
    batch.plus_idx[i] = static_cast<std::uint32_t>(rng_.bounded(size_));
  }
  return batch;
}

std::optional<Matf> ReplayBuffer::sample_goal_states(std::size_t n) {
  return goals_.sample(n);
}

Matf ReplayBuffer::recent_projections(std::size_t n) const {
  const std::size_t count = std::min(n, size_);
  Matf out(static_cast<Eigen::Index>(count), 2);
  // Storage order equals insertion order until the ring wraps; afterwards
  // cursor_ points at the oldest record.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t age = count - 1 - i;  // age 0 = newest
    std::size_t pos;
    if (size_ < capacity_) {
      pos = size_ - 1 - age;
    } else {
      pos = (cursor_ + capacity_ - 1 - age) % capacity_;
    }
    out.row(static_cast<Eigen::Index>(i)) = project(data_[pos].s_next)
                                                .transpose();
  }
  return out;
}

void ReplayBuffer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingArtifactError("cannot write buffer: " + path);
  write_pod(out, kReplayMagic);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(size_));
  write_pod(out, static_cast<std::uint64_t>(cursor_));
  const auto st = rng_.state();
  for (auto w : st) write_pod(out, w);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& t = data_[i];
    for (int k = 0; k < 2; ++k) write_pod(out, t.s.pos[k]);
    for (int k = 0; k < 2; ++k) write_pod(out, t.s.vel[k]);
    for (int k = 0; k < 2; ++k) write_pod(out, t.s.prev_action[k]);
    write_pod(out, static_cast<std::uint32_t>(t.s.step));
    for (int k = 0; k < 2; ++k) write_pod(out, t.s_next.pos[k]);
    for (int k = 0; k < 2; ++k) write_pod(out, t.s_next.vel[k]);
    for (int k = 0; k < 2; ++k) write_pod(out, t.s_next.prev_action[k]);
    write_pod(out, static_cast<std::uint32_t>(t.s_next.step));
    for (int k = 0; k < 2; ++k) write_pod(out, t.a.accel[k]);
    write_pod(out, t.reg_reward);
    write_pod(out, static_cast<std::uint32_t>(t.done ? 1 : 0));
    write_pod(out, t.episode);
  }
  if (!out) throw MissingArtifactError("short write to " + path);
}

void ReplayBuffer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read buffer: " + path);
  std::uint32_t magic = 0, version = 0;
  std::uint64_t count = 0, cursor = 0;
  read_pod(in, magic);
  read_pod(in, version);
  if (magic != kReplayMagic || version != kVersion) {
    throw MissingArtifactError("bad buffer header in " + path);
  }
  read_pod(in, count);
  read_pod(in, cursor);
  std::array<std::uint64_t, 4> st{};
  for (auto& w : st) read_pod(in, w);
  rng_.set_state(st);
  if (count > capacity_) {
    throw MissingArtifactError("buffer snapshot exceeds capacity");
  }
  data_.clear();
  data_.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition& t = data_[i];
    std::uint32_t step = 0, done = 0;
    for (int k = 0; k < 2; ++k) read_pod(in, t.s.pos[k]);
    for (int k = 0; k < 2; ++k) read_pod(in, t.s.vel[k]);
    for (int k = 0; k < 2; ++k) read_pod(in, t.s.prev_action[k]);
    read_pod(in, step);
    t.s.step = static_cast<int>(step);
    for (int k = 0; k < 2; ++k) read_pod(in, t.s_next.pos[k]);
    for (int k = 0; k < 2; ++k) read_pod(in, t.s_next.vel[k]);
    for (int k = 0; k < 2; ++k) read_pod(in, t.s_next.prev_action[k]);
    read_pod(in, step);
    t.s_next.step = static_cast<int>(step);
    for (int k = 0; k < 2; ++k) read_pod(in, t.a.accel[k]);
    read_pod(in, t.reg_reward);
    read_pod(in, done);
    t.done = done != 0;
    read_pod(in, t.episode);
  }
  size_ = count;
  cursor_ = cursor;
  if (!in) throw MissingArtifactError("short read from " + path);
}

}  // namespace fbrl
