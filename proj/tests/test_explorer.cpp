#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "fbrl/errors.hpp"
#include "fbrl/explorer.hpp"

using namespace fbrl;

namespace {

FbModel tiny_model(Rng& rng) {
  FbDims dims;
  dims.d = 4;
  dims.f_hidden = {8};
  dims.b_hidden = {8};
  dims.actor_hidden = {8};
  return make_fb_model<float>(dims, rng);
}

Vecd log_of(std::initializer_list<double> qs) {
  Vecd out(static_cast<Eigen::Index>(qs.size()));
  Eigen::Index i = 0;
  for (double q : qs) out[i++] = std::log(q);
  return out;
}

double total_variation(const Vecd& a, const Vecd& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

}  // namespace

TEST_CASE("inverse-density weights: worked example at beta 2") {
  const Vecd w = inverse_density_weights(log_of({0.1, 0.4, 0.9}), 0.1, 2.0);
  CHECK(w[0] == doctest::Approx(25.0 / 30.0).epsilon(1e-10));
  CHECK(w[1] == doctest::Approx(4.0 / 30.0).epsilon(1e-10));
  CHECK(w[2] == doctest::Approx(1.0 / 30.0).epsilon(1e-10));
}

TEST_CASE("inverse-density weights: beta 0 is uniform") {
  const Vecd w = inverse_density_weights(log_of({0.01, 5.0, 0.3, 2.0}), 0.1,
                                         0.0);
  for (int i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(0.25));
}

TEST_CASE("inverse-density weights: epsilon guards vanishing densities") {
  Vecd logq(2);
  logq << -std::numeric_limits<double>::infinity(), std::log(0.1);
  // log(0 + 0.1) is finite, so the weight stays finite: raw (10, 5).
  Vecd guarded(2);
  guarded << std::log(1e-300), std::log(0.1);
  const Vecd w = inverse_density_weights(guarded, 0.1, 1.0);
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("inverse-density weights: simplex membership and order reversal") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Vecd logq(6);
    for (int i = 0; i < 6; ++i) logq[i] = rng.uniform(-4.0, 2.0);
    const double beta = rng.uniform(0.5, 4.0);
    const Vecd w = inverse_density_weights(logq, 0.1, beta);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.minCoeff() > 0.0);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        if (logq[i] < logq[j]) CHECK(w[i] >= w[j]);
      }
    }
  }
}

TEST_CASE("inverse-density weights: scaling q and epsilon together is inert") {
  Rng rng(4);
  Vecd logq(5);
  for (int i = 0; i < 5; ++i) logq[i] = rng.uniform(-3.0, 1.0);
  const double c = 7.3;
  const Vecd w1 = inverse_density_weights(logq, 0.1, 2.0);
  const Vecd w2 = inverse_density_weights(
      Vecd(logq.array() + std::log(c)), 0.1 * c, 2.0);
  CHECK((w1 - w2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("inverse-density weights: huge epsilon limits to uniform") {
  Rng rng(5);
  Vecd logq(4);
  for (int i = 0; i < 4; ++i) logq[i] = rng.uniform(-3.0, 1.0);
  const Vecd w = inverse_density_weights(logq, 1e6, 2.0);
  for (int i = 0; i < 4; ++i) {
    CHECK(w[i] == doctest::Approx(0.25).epsilon(1e-4));
  }
}

TEST_CASE("weighted index sampling tracks the weights to TV 0.01") {
  Vecd w = inverse_density_weights(
      log_of({0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0}), 0.1, 2.0);
  Rng rng(6);
  const std::size_t draws = 1000000;
  Vecd counts = Vecd::Zero(10);
  const auto picks = sample_weighted_indices(w, draws, rng);
  for (auto p : picks) counts[static_cast<Eigen::Index>(p)] += 1.0;
  counts /= static_cast<double>(draws);
  CHECK(total_variation(counts, w) < 0.01);
}

TEST_CASE("exploration z: goal-slot frequencies follow inverse densities") {
  Rng init(7);
  FbModel model = tiny_model(init);
  Rng flow_rng(8);
  FlowModel flow = make_flow<float>(2, 4, 8, flow_rng);
  flow.fitted = true;  // identity flow: Gaussian densities

  // Pool of 10 distinct projected states.
  Matf pool(10, 2);
  for (int i = 0; i < 10; ++i) {
    pool(i, 0) = -1.8f + 0.4f * static_cast<float>(i);
    pool(i, 1) = 0.3f;
  }
  ExplorationConfig cfg;
  cfg.mode = Mode::kMEBE;
  cfg.goal_fraction = 1.0;  // isolate the goal path
  cfg.beta = 2.0;

  const Vecd logq = log_density(flow, pool).cast<double>();
  const Vecd expected = inverse_density_weights(logq, cfg.epsilon, cfg.beta);

  // Identify picked pool entries through the B embedding.
  const Matf b_pool = net_forward(model.online.b, pool);
  Matf b_dirs(10, model.dims.d);
  for (int i = 0; i < 10; ++i) b_dirs.row(i) = b_pool.row(i).normalized();

  Rng rng(9);
  Vecd counts = Vecd::Zero(10);
  const int rounds = 2000;
  const int per_round = 50;
  for (int r = 0; r < rounds; ++r) {
    const ZBatch zb =
        sample_exploration_z(model, flow, pool, cfg, per_round, rng);
    for (Eigen::Index k = 0; k < per_round; ++k) {
      REQUIRE(zb.sources[static_cast<std::size_t>(k)] == ZSource::kGoal);
      const Vecf dir = zb.z.row(k).normalized().transpose();
      int best = 0;
      float best_dot = -2.0f;
      for (int i = 0; i < 10; ++i) {
        const float dot = dir.dot(b_dirs.row(i).transpose());
        if (dot > best_dot) {
          best_dot = dot;
          best = i;
        }
      }
      counts[best] += 1.0;
    }
  }
  counts /= static_cast<double>(rounds * per_round);
  CHECK(total_variation(counts, expected) < 0.01);
}

TEST_CASE("exploration z: FB modes and zero goal fraction are all-uniform") {
  Rng init(10);
  FbModel model = tiny_model(init);
  Rng flow_rng(11);
  FlowModel flow = make_flow<float>(2, 4, 8, flow_rng);
  flow.fitted = true;
  Matf pool = Matf::Zero(4, 2);

  for (Mode mode : {Mode::kFB, Mode::kFBCritic}) {
    ExplorationConfig cfg;
    cfg.mode = mode;
    Rng rng(12);
    const ZBatch zb = sample_exploration_z(model, flow, pool, cfg, 32, rng);
    for (const auto src : zb.sources) CHECK(src == ZSource::kUniform);
    for (Eigen::Index i = 0; i < zb.z.rows(); ++i) {
      CHECK(zb.z.row(i).norm() == doctest::Approx(2.0f).epsilon(1e-5));
    }
  }

  ExplorationConfig cfg;
  cfg.mode = Mode::kMEBE;
  cfg.goal_fraction = 0.0;
  Rng rng(13);
  const ZBatch zb = sample_exploration_z(model, flow, pool, cfg, 32, rng);
  for (const auto src : zb.sources) CHECK(src == ZSource::kUniform);
}

TEST_CASE("exploration z: unfitted flow falls back to uniform pool weights") {
  Rng init(14);
  FbModel model = tiny_model(init);
  Rng flow_rng(15);
  FlowModel flow = make_flow<float>(2, 4, 8, flow_rng);  // fitted = false
  Matf pool(3, 2);
  pool << 0.0f, 0.0f, 1.0f, 0.0f, 0.0f, 1.0f;
  ExplorationConfig cfg;
  cfg.mode = Mode::kMEBE;
  cfg.goal_fraction = 1.0;
  Rng rng(16);
  const ZBatch zb = sample_exploration_z(model, flow, pool, cfg, 8, rng);
  CHECK(zb.used_uniform_fallback);
}

TEST_CASE("training z: mode table") {
  Rng init(17);
  FbModel model = tiny_model(init);
  Rng flow_rng(18);
  FlowModel flow = make_flow<float>(2, 4, 8, flow_rng);
  flow.fitted = true;
  Matf pool(10, 2);
  for (int i = 0; i < 10; ++i) {
    pool(i, 0) = -1.8f + 0.4f * static_cast<float>(i);
    pool(i, 1) = -0.4f;
  }

  SUBCASE("FB mode is all sphere-uniform") {
    ExplorationConfig cfg;
    cfg.mode = Mode::kFB;
    Rng rng(19);
    const ZBatch zb = select_training_z(model, flow, pool, cfg, 64, rng);
    for (const auto src : zb.sources) CHECK(src == ZSource::kUniform);
  }

  SUBCASE("ablation mode ignores beta: goal picks are uniform over the pool") {
    ExplorationConfig cfg;
    cfg.mode = Mode::kMEBEAbl;
    cfg.goal_fraction = 1.0;
    cfg.beta = 5.0;  // must have no effect
    const Matf b_pool = net_forward(model.online.b, pool);
    Matf b_dirs(10, model.dims.d);
    for (int i = 0; i < 10; ++i) b_dirs.row(i) = b_pool.row(i).normalized();
    Rng rng(20);
    Vecd counts = Vecd::Zero(10);
    const int rounds = 1500;
    const int per_round = 40;
    for (int r = 0; r < rounds; ++r) {
      const ZBatch zb =
          select_training_z(model, flow, pool, cfg, per_round, rng);
      for (Eigen::Index k = 0; k < per_round; ++k) {
        const Vecf dir = zb.z.row(k).normalized().transpose();
        int best = 0;
        float best_dot = -2.0f;
        for (int i = 0; i < 10; ++i) {
          const float dot = dir.dot(b_dirs.row(i).transpose());
          if (dot > best_dot) {
            best_dot = dot;
            best = i;
          }
        }
        counts[best] += 1.0;
      }
    }
    counts /= static_cast<double>(rounds * per_round);
    const Vecd uniform = Vecd::Constant(10, 0.1);
    CHECK(total_variation(counts, uniform) < 0.01);
  }

  SUBCASE("MEBE mode with huge epsilon approaches uniform weights") {
    ExplorationConfig cfg;
    cfg.mode = Mode::kMEBE;
    cfg.epsilon = 1e6;
    const Vecd logq = log_density(flow, pool).cast<double>();
    const Vecd w = inverse_density_weights(logq, cfg.epsilon, cfg.beta);
    for (int i = 0; i < 10; ++i) {
      CHECK(w[i] == doctest::Approx(0.1).epsilon(1e-4));
    }
  }
}

TEST_CASE("training z rows always sit on the sqrt(d) sphere") {
  Rng init(21);
  FbModel model = tiny_model(init);
  Rng flow_rng(22);
  FlowModel flow = make_flow<float>(2, 4, 8, flow_rng);
  flow.fitted = true;
  Matf pool(5, 2);
  pool << 0.0f, 0.0f, 1.0f, 0.5f, -0.5f, 1.0f, 0.3f, -1.2f, 1.9f, 0.1f;
  ExplorationConfig cfg;
  cfg.mode = Mode::kMEBE;
  Rng rng(23);
  const ZBatch zb = select_training_z(model, flow, pool, cfg, 256, rng);
  for (Eigen::Index i = 0; i < zb.z.rows(); ++i) {
    CHECK(zb.z.row(i).norm() == doctest::Approx(2.0f).epsilon(1e-5));
  }
}

TEST_CASE("behavior entropy: uniform bins, degenerate pile, worked split") {
  GridSpec grid;
  grid.bins = 2;  // 4 bins over [-2, 2]^2

  Matf four(4, 2);
  four << -1.0f, -1.0f, -1.0f, 1.0f, 1.0f, -1.0f, 1.0f, 1.0f;
  const EntropyEstimate uniform = behavior_entropy(four, grid);
  CHECK(uniform.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(uniform.nonempty_bins == 4);

  Matf pile = Matf::Constant(10, 2, 0.5f);
  const EntropyEstimate degenerate = behavior_entropy(pile, grid);
  CHECK(degenerate.entropy == doctest::Approx(0.0));
  CHECK(degenerate.nonempty_bins == 1);

  Matf split(4, 2);
  split << -1.0f, -1.0f, -1.0f, -1.0f, -1.0f, -1.0f, 1.0f, 1.0f;
  const EntropyEstimate h = behavior_entropy(split, grid);
  CHECK(h.entropy ==
        doctest::Approx(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25)))
            .epsilon(1e-12));
}

TEST_CASE("behavior entropy: permutation invariance and uniform maximum") {
  GridSpec grid;
  Rng rng(24);
  Matf samples(500, 2);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    samples.data()[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
  }
  const double h1 = behavior_entropy(samples, grid).entropy;
  // Reverse the sample order.
  Matf reversed = samples.colwise().reverse();
  const double h2 = behavior_entropy(reversed, grid).entropy;
  CHECK(h1 == doctest::Approx(h2).epsilon(1e-12));
  CHECK(h1 <= std::log(static_cast<double>(grid.bins * grid.bins)) + 1e-12);
  CHECK(behavior_entropy(samples, grid).samples == 500);
}

TEST_CASE("mode names round-trip and bad names raise config errors") {
  for (Mode m :
       {Mode::kFB, Mode::kFBCritic, Mode::kMEBE, Mode::kMEBEAbl}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_mode("bogus"), ConfigError);
}
