#pragma once

#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fbrl/config.hpp"
#include "fbrl/explorer.hpp"
#include "fbrl/fb_model.hpp"
#include "fbrl/flow.hpp"
#include "fbrl/reg_critic.hpp"
#include "fbrl/replay.hpp"

namespace fbrl {

struct TrainArtifacts {
  std::string checkpoint_dir;
  std::string metrics_path;
  bool diverged = false;
  std::string diagnostic;
};

// The closed training loop: exploration-z selection, lockstep rollouts over
// the worker envs, buffer appends, periodic flow refits, and interleaved
// gradient updates of F, B, the actor and the regularizer critic. Fully
// single-threaded and deterministic given the seed; a checkpoint captures
// every mutable word (parameters, optimizer moments, rng streams, worker
// envs, buffers, metric accumulators), so resumed runs continue bit-exactly.
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  // Restores a trainer from a checkpoint directory written by
  // save_checkpoint.
  static std::unique_ptr<Trainer> resume(const std::string& checkpoint_dir);

  // Runs the loop to the configured step budget, writes metrics.csv and the
  // final checkpoint into run_dir. On numeric divergence, saves an
  // emergency checkpoint and reports the failing loss instead of throwing.
  TrainArtifacts train();

  void save_checkpoint(const std::string& dir) const;

  // One metrics row is emitted per flow refresh; rows accumulated so far
  // (resumed runs hold only post-resume rows).
  std::string metrics_csv() const;
  static std::string metrics_header();

  std::int64_t global_steps() const { return global_steps_; }
  // Adam step counters, one per optimizer invocation.
  std::int64_t fb_updates() const { return adam_f1_.t; }
  std::int64_t actor_updates() const { return adam_actor_.t; }
  std::int64_t qreg_updates() const { return adam_q1_.t; }
  const FbModel& model() const { return model_; }
  const RegCritic& critic() const { return critic_; }
  const FlowModel& flow() const { return flow_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const RunConfig& config() const { return cfg_; }

  void set_log(std::ostream* log) { log_ = log; }

 private:
  struct Worker {
    EnvState state;
    Rng env_rng;
    Vecf z;
    std::uint32_t episode = 0;
  };

  struct Accum {
    double fb_main = 0.0, fb_ortho = 0.0, fb_fz = 0.0;
    double actor = 0.0, qreg = 0.0, action_rate = 0.0;
    std::int64_t fb_count = 0, actor_count = 0, qreg_count = 0,
                 action_count = 0;
  };

  Trainer(const RunConfig& cfg, const std::string* checkpoint_dir);

  void rollout_round();
  void update_agent(std::int64_t grad_steps);
  void refresh_worker_z();
  void refit_flow();
  void emit_metrics_row();
  FbBatch assemble_batch(const FbIndexBatch& idx, const Matf& z);
  Matf goal_pool();

  RunConfig cfg_;
  EnvParams env_;
  Mode mode_;
  ExplorationConfig expl_;
  FbLossCoeffs coeffs_;

  FbModel model_;
  RegCritic critic_;
  FlowModel flow_;
  ReplayBuffer buffer_;

  AdamState adam_f1_, adam_f2_, adam_b_, adam_actor_, adam_q1_, adam_q2_;

  Rng rollout_rng_, explorer_rng_, noise_rng_, flow_seed_rng_;
  std::vector<Worker> workers_;

  std::int64_t global_steps_ = 0;
  std::int64_t grad_steps_total_ = 0;
  std::int64_t episode_counter_ = 0;
  std::int64_t z_age_ = 0;
  std::int64_t last_checkpoint_step_ = 0;
  std::int64_t rows_emitted_ = 0;
  double last_flow_nll_ = std::numeric_limits<double>::quiet_NaN();
  bool flow_fallback_logged_ = false;

  Accum accum_;
  std::vector<std::string> rows_;
  std::ostream* log_ = nullptr;
};

// Checkpoint subset used at evaluation/inference time.
struct LoadedAgent {
  RunConfig cfg;
  FbModel model;
  RegCritic critic;
  FlowModel flow;
};

LoadedAgent load_agent(const std::string& checkpoint_dir);

}  // namespace fbrl
