#include "fbrl/explorer.hpp"

#include <algorithm>
#include <cmath>

#include "fbrl/errors.hpp"

namespace fbrl {

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kFB:
      return "FB";
    case Mode::kFBCritic:
      return "FB-Critic";
    case Mode::kMEBE:
      return "MEBE";
    case Mode::kMEBEAbl:
      return "MEBE-abl";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "FB") return Mode::kFB;
  if (name == "FB-Critic") return Mode::kFBCritic;
  if (name == "MEBE") return Mode::kMEBE;
  if (name == "MEBE-abl") return Mode::kMEBEAbl;
  throw ConfigError("unknown mode '" + name +
                    "' (expected FB, FB-Critic, MEBE or MEBE-abl)");
}

Vecd inverse_density_weights(const Vecd& log_density, double epsilon,
                             double beta) {
  if (!(epsilon > 0.0)) {
    throw ConfigError("inverse_density_weights: epsilon must be positive");
  }
  if (beta < 0.0) {
    throw ConfigError("inverse_density_weights: beta must be >= 0");
  }
  const auto n = log_density.size();
  const double log_eps = std::log(epsilon);
  Vecd logw(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(log_density[i])) {
      throw NumericError("inverse_density_weights: non-finite log density");
    }
    // log(q + eps) via logaddexp.
    const double a = std::max(log_density[i], log_eps);
    const double b = std::min(log_density[i], log_eps);
    logw[i] = -beta * (a + std::log1p(std::exp(b - a)));
  }
  const double m = logw.maxCoeff();
  Vecd w = (logw.array() - m).exp();
  w /= w.sum();
  return w;
}

std::vector<std::size_t> sample_weighted_indices(const Vecd& weights,
                                                 std::size_t count, Rng& rng) {
  Vecd cdf(weights.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  std::vector<std::size_t> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = rng.uniform() * acc;
    const auto it = std::lower_bound(cdf.data(), cdf.data() + cdf.size(), u);
    out[k] = std::min<std::size_t>(
        static_cast<std::size_t>(it - cdf.data()),
        static_cast<std::size_t>(weights.size() - 1));
  }
  return out;
}

namespace {

// Shared machinery for exploration and training z batches. Draw order is
// fixed: slot coins first, then pool indices in slot order, then sphere
// rows in slot order, so the rng stream is independent of B evaluation.
ZBatch mixed_z_batch(const FbModel& model, const FlowModel& flow,
                     const Matf& goal_pool, const ExplorationConfig& cfg,
                     Eigen::Index count, bool uniform_over_pool, Rng& rng) {
  const int d = model.dims.d;
  ZBatch out;
  out.z.resize(count, d);
  out.sources.assign(static_cast<std::size_t>(count), ZSource::kUniform);

  const bool all_uniform = cfg.mode == Mode::kFB ||
                           cfg.mode == Mode::kFBCritic ||
                           goal_pool.rows() == 0;
  std::vector<bool> is_goal(static_cast<std::size_t>(count), false);
  if (!all_uniform) {
    for (Eigen::Index i = 0; i < count; ++i) {
      is_goal[static_cast<std::size_t>(i)] = rng.uniform() < cfg.goal_fraction;
    }
  }

  std::size_t goal_count = 0;
  for (bool g : is_goal) goal_count += g ? 1 : 0;

  std::vector<std::size_t> picks;
  if (goal_count > 0) {
    Vecd weights;
    if (uniform_over_pool || !flow.fitted) {
      out.used_uniform_fallback = !uniform_over_pool;
      weights = Vecd::Constant(goal_pool.rows(),
                               1.0 / static_cast<double>(goal_pool.rows()));
    } else {
      const Vecd logq = log_density(flow, goal_pool).cast<double>();
      weights = inverse_density_weights(logq, cfg.epsilon, cfg.beta);
    }
    picks = sample_weighted_indices(weights, goal_count, rng);
  }

  // Uniform-sphere rows drawn in slot order after the pool picks.
  Matf sphere;
  if (goal_count < static_cast<std::size_t>(count)) {
    sphere = sample_uniform_sphere<float>(
        d, static_cast<Eigen::Index>(count - goal_count), rng);
  }

  Matf goal_states(static_cast<Eigen::Index>(goal_count), goal_pool.cols());
  for (std::size_t g = 0; g < goal_count; ++g) {
    goal_states.row(static_cast<Eigen::Index>(g)) =
        goal_pool.row(static_cast<Eigen::Index>(picks[g]));
  }
  Matf b_out;
  if (goal_count > 0) {
    b_out = net_forward(model.online.b, goal_states);
  }

  const auto radius = static_cast<float>(std::sqrt(static_cast<double>(d)));
  std::size_t gi = 0, ui = 0;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (is_goal[static_cast<std::size_t>(i)]) {
      Vecf z = b_out.row(static_cast<Eigen::Index>(gi)).transpose();
      const float norm = z.norm();
      if (norm > 1e-12f) {
        out.z.row(i) = (radius / norm) * z.transpose();
        out.sources[static_cast<std::size_t>(i)] = ZSource::kGoal;
      } else {
        // Collapsed embedding; keep the slot on the sphere.
        out.z.row(i) = sample_uniform_sphere<float>(d, 1, rng).row(0);
      }
      ++gi;
    } else {
      out.z.row(i) = sphere.row(static_cast<Eigen::Index>(ui));
      ++ui;
    }
  }
  return out;
}

}  // namespace

ZBatch sample_exploration_z(const FbModel& model, const FlowModel& flow,
                            const Matf& goal_pool,
                            const ExplorationConfig& cfg, Eigen::Index count,
                            Rng& rng) {
  return mixed_z_batch(model, flow, goal_pool, cfg, count,
                       /*uniform_over_pool=*/false, rng);
}

ZBatch select_training_z(const FbModel& model, const FlowModel& flow,
                         const Matf& goal_pool, const ExplorationConfig& cfg,
                         Eigen::Index count, Rng& rng) {
  const bool uniform_over_pool = cfg.mode == Mode::kMEBEAbl;
  return mixed_z_batch(model, flow, goal_pool, cfg, count, uniform_over_pool,
                       rng);
}

EntropyEstimate behavior_entropy(const Matf& projected, const GridSpec& grid) {
  if (projected.rows() < 1) {
    throw UsageError("behavior_entropy: need at least one sample");
  }
  EntropyEstimate est;
  est.grid = grid;
  est.samples = static_cast<std::size_t>(projected.rows());
  std::vector<std::int64_t> counts(
      static_cast<std::size_t>(grid.bins) * grid.bins, 0);
  const double width = (grid.hi - grid.lo) / grid.bins;
  for (Eigen::Index i = 0; i < projected.rows(); ++i) {
    int bx = static_cast<int>((projected(i, 0) - grid.lo) / width);
    int by = static_cast<int>((projected(i, 1) - grid.lo) / width);
    bx = std::clamp(bx, 0, grid.bins - 1);
    by = std::clamp(by, 0, grid.bins - 1);
    ++counts[static_cast<std::size_t>(bx) * grid.bins + by];
  }
  double h = 0.0;
  for (std::int64_t c : counts) {
    if (c == 0) continue;
    ++est.nonempty_bins;
    const double p = static_cast<double>(c) / static_cast<double>(est.samples);
    h -= p * std::log(p);
  }
  est.entropy = h;
  return est;
}

}  // namespace fbrl
