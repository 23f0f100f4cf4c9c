#pragma once

#include <string>
#include <vector>

#include "fbrl/fb_model.hpp"
#include "fbrl/flow.hpp"
#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

enum class Mode { kFB, kFBCritic, kMEBE, kMEBEAbl };

std::string mode_name(Mode mode);
Mode parse_mode(const std::string& name);  // throws ConfigError

struct ExplorationConfig {
  double beta = 2.0;          // inverse-sampling strength
  double epsilon = 0.1;       // density floor for stability
  double goal_fraction = 0.8; // share of slots mapped through B
  int candidate_pool = 1024;
  int z_refresh_interval = 100;
  Mode mode = Mode::kMEBE;
};

// Normalized weights proportional to (q + epsilon)^(-beta), computed in log
// space. Input is log q.
Vecd inverse_density_weights(const Vecd& log_density, double epsilon,
                             double beta);

// Draws `count` indices from a normalized weight vector (shared discrete
// sampler for all inverse-density draws).
std::vector<std::size_t> sample_weighted_indices(const Vecd& weights,
                                                 std::size_t count, Rng& rng);

struct ZBatch {
  Matf z;                        // (n x d), every row on the sqrt(d) sphere
  std::vector<ZSource> sources;  // per row
  bool used_uniform_fallback = false;
};

// Exploration embeddings: each slot independently receives, with
// probability goal_fraction, z = B(s_g) renormalized where s_g is drawn
// from the candidate pool with inverse-density weights, and otherwise a
// uniform-sphere draw. Modes FB and FB-Critic force all-uniform slots. An
// unfitted flow falls back to uniform pool weights and reports it.
ZBatch sample_exploration_z(const FbModel& model, const FlowModel& flow,
                            const Matf& goal_pool,
                            const ExplorationConfig& cfg, Eigen::Index count,
                            Rng& rng);

// Training-time z distribution nu. MEBE matches the exploration
// distribution; MEBE-abl draws goal slots uniformly from the pool (beta has
// no effect); FB and FB-Critic are all-uniform.
ZBatch select_training_z(const FbModel& model, const FlowModel& flow,
                         const Matf& goal_pool, const ExplorationConfig& cfg,
                         Eigen::Index count, Rng& rng);

struct GridSpec {
  double lo = -2.0;
  double hi = 2.0;
  int bins = 20;  // per axis
};

struct EntropyEstimate {
  double entropy = 0.0;  // nats
  int nonempty_bins = 0;
  std::size_t samples = 0;
  GridSpec grid;
};

// Shannon entropy of the fixed-grid histogram of projected states.
EntropyEstimate behavior_entropy(const Matf& projected, const GridSpec& grid);

}  // namespace fbrl
