#include "fbrl/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fbrl/errors.hpp"

namespace fbrl {

namespace {

using FieldRef =
    std::variant<std::string RunConfig::*, std::uint64_t RunConfig::*,
                 std::int64_t RunConfig::*, double RunConfig::*,
                 std::vector<std::int64_t> RunConfig::*>;

struct FieldDef {
  const char* key;
  FieldRef ref;
  const char* help;
};

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      {"mode", &RunConfig::mode, "FB | FB-Critic | MEBE | MEBE-abl"},
      {"seed", &RunConfig::seed, "master seed"},
      {"run_dir", &RunConfig::run_dir, "output directory"},
      {"total_steps", &RunConfig::total_steps,
       "global env steps (large-scale reference: 150k)"},
      {"workers", &RunConfig::workers,
       "parallel rollout workers (large-scale reference: 2048)"},
      {"steps_between_updates", &RunConfig::steps_between_updates,
       "rollout steps per worker between agent updates"},
      {"grad_steps_per_update", &RunConfig::grad_steps_per_update,
       "gradient steps per agent update"},
      {"policy_delay", &RunConfig::policy_delay, "TD3 actor update interval"},
      {"batch_size", &RunConfig::batch_size,
       "training batch (large-scale reference: 4096)"},
      {"init_random_steps", &RunConfig::init_random_steps,
       "initial steps with uniform random actions"},
      {"buffer_capacity", &RunConfig::buffer_capacity,
       "replay capacity (large-scale reference: 4M)"},
      {"goal_buffer_capacity", &RunConfig::goal_buffer_capacity,
       "goal buffer capacity"},
      {"checkpoint_interval", &RunConfig::checkpoint_interval,
       "steps between periodic checkpoints"},
      {"d", &RunConfig::d, "embedding dimension (large-scale reference: 50)"},
      {"gamma", &RunConfig::gamma, "discount factor"},
      {"lambda_reg", &RunConfig::lambda_reg,
       "regularizer weight in the actor loss (0 in mode FB)"},
      {"ortho_coef", &RunConfig::ortho_coef, "orthonormality loss weight"},
      {"fz_coef", &RunConfig::fz_coef, "Fz regularization loss weight"},
      {"sigma_ridge", &RunConfig::sigma_ridge,
       "ridge added to the batch B covariance"},
      {"beta", &RunConfig::beta, "inverse-density sampling strength"},
      {"epsilon", &RunConfig::epsilon, "density floor for stability"},
      {"goal_fraction", &RunConfig::goal_fraction,
       "share of z slots taken from buffer goals"},
      {"candidate_pool", &RunConfig::candidate_pool,
       "goal candidates per weighting pass"},
      {"z_refresh_interval", &RunConfig::z_refresh_interval,
       "worker steps between z refreshes"},
      {"explore_noise", &RunConfig::explore_noise,
       "rollout action noise scale"},
      {"smoothing_noise", &RunConfig::smoothing_noise,
       "target policy smoothing noise"},
      {"smoothing_clip", &RunConfig::smoothing_clip,
       "target policy smoothing clip"},
      {"lr_f", &RunConfig::lr_f,
       "F learning rate (large-scale reference: 5e-5)"},
      {"lr_b", &RunConfig::lr_b,
       "B learning rate (large-scale reference: 5e-5)"},
      {"lr_actor", &RunConfig::lr_actor,
       "actor learning rate (large-scale reference: 5e-5)"},
      {"lr_qreg", &RunConfig::lr_qreg,
       "regularizer critic learning rate (large-scale reference: 5e-5)"},
      {"tau_f", &RunConfig::tau_f, "soft update coefficient for F"},
      {"tau_b", &RunConfig::tau_b, "soft update coefficient for B"},
      {"tau_actor", &RunConfig::tau_actor, "soft update coefficient, actor"},
      {"tau_qreg", &RunConfig::tau_qreg,
       "soft update coefficient, regularizer critic"},
      {"f_hidden", &RunConfig::f_hidden,
       "F hidden widths (large-scale reference: 1024,1024)"},
      {"b_hidden", &RunConfig::b_hidden, "B hidden widths"},
      {"actor_hidden", &RunConfig::actor_hidden, "actor hidden widths"},
      {"qreg_hidden", &RunConfig::qreg_hidden,
       "regularizer critic hidden widths"},
      {"flow_layers", &RunConfig::flow_layers, "coupling layers"},
      {"flow_hidden", &RunConfig::flow_hidden, "coupling subnet hidden dim"},
      {"flow_lr", &RunConfig::flow_lr, "flow learning rate"},
      {"flow_batch", &RunConfig::flow_batch, "flow batch size"},
      {"flow_epochs", &RunConfig::flow_epochs, "flow training epochs"},
      {"flow_refresh_interval", &RunConfig::flow_refresh_interval,
       "global env steps between flow refits"},
      {"entropy_window", &RunConfig::entropy_window,
       "recent projected samples used by the entropy metric"},
      {"entropy_bins", &RunConfig::entropy_bins, "entropy grid bins per axis"},
      {"inference_samples", &RunConfig::inference_samples,
       "buffer samples per task inference (large-scale reference: 100k)"},
      {"eval_episodes", &RunConfig::eval_episodes,
       "evaluation episodes per task"},
      {"env_dt", &RunConfig::env_dt, "integrator step"},
      {"env_accel_scale", &RunConfig::env_accel_scale, "acceleration gain"},
      {"env_drag", &RunConfig::env_drag, "velocity drag"},
      {"env_v_max", &RunConfig::env_v_max, "velocity bound"},
      {"env_p_max", &RunConfig::env_p_max, "arena half-width"},
      {"episode_len", &RunConfig::episode_len, "steps per episode"},
  };
  return defs;
}

const FieldDef* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  const auto* begin = value.data();
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad integer for key '" + key + "': " + value);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* begin = value.data();
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad unsigned integer for key '" + key + "': " + value);
  }
  return out;
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad real for key '" + key + "': " + value);
  }
}

std::vector<std::int64_t> parse_list(const std::string& key,
                                     const std::string& value) {
  std::vector<std::int64_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_i64(key, item));
  }
  if (out.empty()) {
    throw ConfigError("empty integer list for key '" + key + "'");
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Mode RunConfig::parsed_mode() const { return parse_mode(mode); }

EnvParams RunConfig::env_params() const {
  EnvParams p;
  p.dt = static_cast<float>(env_dt);
  p.accel_scale = static_cast<float>(env_accel_scale);
  p.drag = static_cast<float>(env_drag);
  p.v_max = static_cast<float>(env_v_max);
  p.p_max = static_cast<float>(env_p_max);
  p.episode_len = static_cast<int>(episode_len);
  return p;
}

ExplorationConfig RunConfig::exploration_config() const {
  ExplorationConfig e;
  e.beta = beta;
  e.epsilon = epsilon;
  e.goal_fraction = goal_fraction;
  e.candidate_pool = static_cast<int>(candidate_pool);
  e.z_refresh_interval = static_cast<int>(z_refresh_interval);
  e.mode = parsed_mode();
  return e;
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  const FieldDef* field = find_field(key);
  if (field == nullptr) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  std::visit(
      [&](auto member) {
        using T = std::remove_cvref_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = value;
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          cfg.*member = parse_u64(key, value);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          cfg.*member = parse_i64(key, value);
        } else if constexpr (std::is_same_v<T, double>) {
          cfg.*member = parse_f64(key, value);
        } else {
          cfg.*member = parse_list(key, value);
        }
      },
      field->ref);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> unknown;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (find_field(key) == nullptr) {
      unknown.push_back(key);
      continue;
    }
    apply_override(cfg, key, value);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# run configuration\n";
  for (const auto& f : fields()) {
    out << f.key << " = ";
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(cfg.*member)>;
          if constexpr (std::is_same_v<T, std::string>) {
            out << cfg.*member;
          } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
            const auto& v = cfg.*member;
            for (std::size_t i = 0; i < v.size(); ++i) {
              if (i) out << ',';
              out << v[i];
            }
          } else if constexpr (std::is_same_v<T, double>) {
            out << format_f64(cfg.*member);
          } else {
            out << cfg.*member;
          }
        },
        f.ref);
    out << "  # " << f.help << '\n';
  }
  return out.str();
}

void validate_config(RunConfig& cfg) {
  const Mode mode = parse_mode(cfg.mode);  // throws on bad mode
  if (mode == Mode::kFB) cfg.lambda_reg = 0.0;
  if (cfg.total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (cfg.steps_between_updates < 1 || cfg.grad_steps_per_update < 1 ||
      cfg.policy_delay < 1 || cfg.z_refresh_interval < 1 ||
      cfg.flow_refresh_interval < 1 || cfg.checkpoint_interval < 1) {
    throw ConfigError("intervals must be positive");
  }
  if (cfg.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (cfg.d < 2) throw ConfigError("d must be >= 2");
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) {
    throw ConfigError("gamma must be in (0, 1)");
  }
  if (cfg.lambda_reg < 0.0) throw ConfigError("lambda_reg must be >= 0");
  if (cfg.beta < 0.0) throw ConfigError("beta must be >= 0");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (cfg.goal_fraction < 0.0 || cfg.goal_fraction > 1.0) {
    throw ConfigError("goal_fraction must be in [0, 1]");
  }
  if (cfg.candidate_pool < 1) throw ConfigError("candidate_pool must be >= 1");
  if (cfg.buffer_capacity < 1 || cfg.goal_buffer_capacity < 1) {
    throw ConfigError("buffer capacities must be positive");
  }
  if (cfg.episode_len < 1) throw ConfigError("episode_len must be positive");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

}  // namespace fbrl
