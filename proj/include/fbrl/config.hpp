#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fbrl/explorer.hpp"

namespace fbrl {

// Full experiment configuration. Desk defaults keep the paper-scale update
// cadence, mixing fractions and policy delay while shrinking network sizes,
// batch and step counts to CPU minutes; the large-scale values are noted in
// the dumped config comments.
struct RunConfig {
  std::string mode = "MEBE";  // FB | FB-Critic | MEBE | MEBE-abl
  std::uint64_t seed = 0;
  std::string run_dir = "runs/run";

  std::int64_t total_steps = 100000;
  std::int64_t workers = 16;
  std::int64_t steps_between_updates = 10;  // per worker
  std::int64_t grad_steps_per_update = 10;
  std::int64_t policy_delay = 2;
  std::int64_t batch_size = 512;
  std::int64_t init_random_steps = 1000;
  std::int64_t buffer_capacity = 500000;
  std::int64_t goal_buffer_capacity = 10000;
  std::int64_t checkpoint_interval = 10000;

  std::int64_t d = 16;
  double gamma = 0.98;
  double lambda_reg = 20.0;
  double ortho_coef = 100.0;
  double fz_coef = 0.1;
  double sigma_ridge = 1e-5;

  double beta = 2.0;
  double epsilon = 0.1;
  double goal_fraction = 0.8;
  std::int64_t candidate_pool = 1024;
  std::int64_t z_refresh_interval = 100;

  double explore_noise = 0.2;
  double smoothing_noise = 0.2;
  double smoothing_clip = 0.5;

  double lr_f = 1e-3;
  double lr_b = 1e-3;
  double lr_actor = 1e-3;
  double lr_qreg = 1e-3;
  double tau_f = 0.01;
  double tau_b = 0.01;
  double tau_actor = 0.01;
  double tau_qreg = 0.005;

  std::vector<std::int64_t> f_hidden = {64, 64};
  std::vector<std::int64_t> b_hidden = {64, 64};
  std::vector<std::int64_t> actor_hidden = {64, 64};
  std::vector<std::int64_t> qreg_hidden = {64, 64, 64, 64};

  std::int64_t flow_layers = 10;
  std::int64_t flow_hidden = 64;
  double flow_lr = 1e-3;
  std::int64_t flow_batch = 256;
  std::int64_t flow_epochs = 30;
  std::int64_t flow_refresh_interval = 1000;

  std::int64_t entropy_window = 50000;
  std::int64_t entropy_bins = 20;

  std::int64_t inference_samples = 10000;
  std::int64_t eval_episodes = 10;

  // Environment constants.
  double env_dt = 0.05;
  double env_accel_scale = 4.0;
  double env_drag = 0.5;
  double env_v_max = 2.0;
  double env_p_max = 5.0;
  std::int64_t episode_len = 250;

  Mode parsed_mode() const;
  EnvParams env_params() const;
  ExplorationConfig exploration_config() const;
};

// Key-value text format: one "key = value" per line, '#' comments, integer
// lists comma-separated. Unknown keys raise ConfigError listing them.
RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

// Overrides as (key, value) string pairs from the command line.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

// Canonical dump; load(dump(cfg)) reproduces cfg exactly.
std::string dump_config(const RunConfig& cfg);

// Invariant checks; normalizes mode FB to lambda_reg = 0.
void validate_config(RunConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace fbrl
