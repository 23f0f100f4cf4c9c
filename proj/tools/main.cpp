#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fbrl/checkpoint.hpp"
#include "fbrl/config.hpp"
#include "fbrl/errors.hpp"
#include "fbrl/eval.hpp"
#include "fbrl/tabular.hpp"
#include "fbrl/trainer.hpp"

namespace fs = std::filesystem;
using namespace fbrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitMissing = 3;

struct TrainOpts {
  std::string config_path;
  std::string resume_dir;
  std::map<std::string, std::string> overrides;
};

int cmd_train(const TrainOpts& opts) {
  std::unique_ptr<Trainer> trainer;
  if (!opts.resume_dir.empty()) {
    trainer = Trainer::resume(opts.resume_dir);
  } else {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = load_config(opts.config_path);
    for (const auto& [key, value] : opts.overrides) {
      apply_override(cfg, key, value);
    }
    validate_config(cfg);
    trainer = std::make_unique<Trainer>(cfg);
  }
  trainer->set_log(&std::cerr);
  const TrainArtifacts artifacts = trainer->train();
  std::cout << "metrics: " << artifacts.metrics_path << "\n"
            << "checkpoint: " << artifacts.checkpoint_dir << "\n";
  if (artifacts.diverged) {
    std::cerr << "training diverged: " << artifacts.diagnostic << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, std::uint64_t seed,
             std::int64_t episodes, const std::string& out_path) {
  const EvalReport report = run_eval(checkpoint, seed, episodes);
  const LoadedAgent agent = load_agent(checkpoint);
  const std::string csv =
      eval_report_csv(report, agent.cfg.mode, agent.cfg.seed);
  const std::string path =
      out_path.empty() ? (fs::path(checkpoint) / "eval_report.csv").string()
                       : out_path;
  atomic_write_text(path, csv);
  std::cout << csv;
  std::cout << "overall mean return: " << report.mean_return_overall << "\n"
            << "report written to " << path << "\n";
  return kExitOk;
}

int cmd_infer(const std::string& checkpoint, const std::string& samples_path,
              const std::string& out_path) {
  std::ifstream in(samples_path);
  if (!in) throw MissingArtifactError("cannot open " + samples_path);
  std::vector<float> xs, ys, rs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') ||
        !std::getline(ls, c)) {
      throw UsageError("expected 'vx,vy,reward' rows in " + samples_path);
    }
    try {
      xs.push_back(std::stof(a));
      ys.push_back(std::stof(b));
      rs.push_back(std::stof(c));
    } catch (const std::exception&) {
      if (xs.empty()) continue;  // header line
      throw UsageError("bad sample row: " + line);
    }
  }
  if (xs.empty()) {
    throw UsageError("no samples in " + samples_path);
  }
  const LoadedAgent agent = load_agent(checkpoint);
  Matf phi(static_cast<Eigen::Index>(xs.size()), 2);
  Vecf rewards(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    phi(static_cast<Eigen::Index>(i), 0) = xs[i];
    phi(static_cast<Eigen::Index>(i), 1) = ys[i];
    rewards[static_cast<Eigen::Index>(i)] = rs[i];
  }
  const LatentZ z = infer_task_embedding(agent.model, phi, rewards);
  std::ostringstream out;
  char buf[64];
  for (Eigen::Index i = 0; i < z.z.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(z.z[i]));
    out << buf << "\n";
  }
  atomic_write_text(out_path, out.str());
  std::cout << "z written to " << out_path << " (norm " << z.z.norm()
            << ", expected sqrt(d) = "
            << std::sqrt(static_cast<double>(agent.cfg.d)) << ")\n";
  return kExitOk;
}

int cmd_oracle_check(int max_states, int trials, std::uint64_t seed,
                     bool inject_fault) {
  const OracleSuiteResult result =
      run_oracle_suite(max_states, trials, seed, inject_fault);
  std::cout << result.report;
  return result.pass ? kExitOk : kExitNumeric;
}

struct RunInfo {
  std::string dir;
  std::string mode;
  std::string seed;
};

RunInfo read_run_info(const std::string& run_dir) {
  RunInfo info;
  info.dir = run_dir;
  const RunConfig cfg =
      load_config((fs::path(run_dir) / "config.txt").string());
  info.mode = cfg.mode;
  info.seed = std::to_string(cfg.seed);
  return info;
}

int cmd_export(const std::vector<std::string>& run_dirs,
               const std::string& out_dir) {
  if (run_dirs.empty()) throw UsageError("export needs at least one --run");
  struct Loaded {
    RunInfo info;
    std::vector<std::string> metric_rows;  // without header
    std::string metrics_header;
    std::string eval_csv;  // may be empty
  };
  std::vector<Loaded> runs;
  for (const auto& dir : run_dirs) {
    const fs::path metrics = fs::path(dir) / "metrics.csv";
    if (!fs::exists(metrics)) {
      throw MissingArtifactError("no metrics.csv in run dir " + dir);
    }
    Loaded run;
    run.info = read_run_info(dir);
    std::ifstream in(metrics);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (first) {
        run.metrics_header = line;
        first = false;
      } else {
        run.metric_rows.push_back(line);
      }
    }
    for (const auto& candidate :
         {fs::path(dir) / "eval_report.csv",
          fs::path(dir) / "checkpoint" / "eval_report.csv"}) {
      if (fs::exists(candidate)) {
        std::ifstream ein(candidate);
        std::stringstream ss;
        ss << ein.rdbuf();
        run.eval_csv = ss.str();
        break;
      }
    }
    runs.push_back(std::move(run));
  }

  fs::create_directories(out_dir);

  // Entropy trace per run (one row per flow refresh).
  {
    std::ostringstream out;
    out << "# entropy of recent projected buffer states per refresh\n";
    out << "run,mode,seed,step,behavior_entropy\n";
    for (const auto& run : runs) {
      for (const auto& row : run.metric_rows) {
        std::stringstream rs(row);
        std::vector<std::string> cols;
        std::string col;
        while (std::getline(rs, col, ',')) cols.push_back(col);
        if (cols.size() < 11) continue;
        out << run.info.dir << ',' << run.info.mode << ',' << run.info.seed
            << ',' << cols[0] << ',' << cols[9] << "\n";
      }
    }
    atomic_write_text((fs::path(out_dir) / "entropy_vs_steps.csv").string(),
                      out.str());
  }

  // Raw metric traces, keyed.
  {
    std::ostringstream out;
    out << "run," << runs.front().metrics_header << "\n";
    for (const auto& run : runs) {
      for (const auto& row : run.metric_rows) {
        out << run.info.dir << ',' << row << "\n";
      }
    }
    atomic_write_text((fs::path(out_dir) / "metrics_all.csv").string(),
                      out.str());
  }

  // Per-task returns, keyed by mode, when eval reports exist.
  {
    std::ostringstream out;
    out << "# per-task mean returns from eval reports\n";
    bool any = false;
    bool header_done = false;
    for (const auto& run : runs) {
      if (run.eval_csv.empty()) continue;
      std::stringstream es(run.eval_csv);
      std::string line;
      while (std::getline(es, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("mode,", 0) == 0) {
          if (!header_done) {
            out << "run," << line << "\n";
            header_done = true;
          }
          continue;
        }
        out << run.info.dir << ',' << line << "\n";
        any = true;
      }
    }
    if (any) {
      atomic_write_text((fs::path(out_dir) / "task_returns.csv").string(),
                        out.str());
    }
  }

  // Flow density grid from each run's final checkpoint.
  {
    std::ostringstream out;
    out << "run,mode,seed,x,y,log_density\n";
    bool any = false;
    for (const auto& run : runs) {
      const fs::path ckpt = fs::path(run.info.dir) / "checkpoint";
      if (!fs::exists(ckpt / "manifest.txt")) continue;
      const LoadedAgent agent = load_agent(ckpt.string());
      if (!agent.flow.fitted) continue;
      const int grid_n = 41;
      const double lo = -agent.cfg.env_v_max, hi = agent.cfg.env_v_max;
      Matf points(grid_n * grid_n, 2);
      for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
          points(i * grid_n + j, 0) =
              static_cast<float>(lo + (hi - lo) * i / (grid_n - 1));
          points(i * grid_n + j, 1) =
              static_cast<float>(lo + (hi - lo) * j / (grid_n - 1));
        }
      }
      const Vecf logq = log_density(agent.flow, points);
      char buf[96];
      for (Eigen::Index r = 0; r < points.rows(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.9g",
                      static_cast<double>(points(r, 0)),
                      static_cast<double>(points(r, 1)),
                      static_cast<double>(logq[r]));
        out << run.info.dir << ',' << run.info.mode << ',' << run.info.seed
            << ',' << buf << "\n";
      }
      any = true;
    }
    if (any) {
      atomic_write_text((fs::path(out_dir) / "density_grid.csv").string(),
                        out.str());
    }
  }

  std::cout << "export written to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online forward-backward zero-shot RL on a 2-D point mass"};
  app.require_subcommand(1);

  TrainOpts train_opts;
  auto* train = app.add_subcommand("train", "run the training loop");
  train->add_option("--config", train_opts.config_path,
                    "config file (key = value lines)");
  train->add_option("--resume", train_opts.resume_dir,
                    "resume from a checkpoint directory");
  std::map<std::string, std::string> override_values;
  for (const auto& key : config_keys()) {
    train->add_option_function<std::string>(
        "--" + key,
        [&override_values, key](const std::string& v) {
          override_values[key] = v;
        },
        "override config key " + key);
  }
  train->add_option_function<std::string>(
      "--steps",
      [&override_values](const std::string& v) {
        override_values["total_steps"] = v;
      },
      "alias for --total_steps");

  std::string eval_checkpoint, eval_out;
  std::uint64_t eval_seed = 7;
  std::int64_t eval_episodes = -1;
  auto* eval = app.add_subcommand("eval", "zero-shot task-grid evaluation");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")
      ->required();
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--episodes", eval_episodes, "episodes per task");
  eval->add_option("--out", eval_out, "report path");

  std::string infer_checkpoint, infer_samples, infer_out = "z.txt";
  auto* infer =
      app.add_subcommand("infer", "task inference from reward samples");
  infer->add_option("--checkpoint", infer_checkpoint, "checkpoint directory")
      ->required();
  infer->add_option("--samples", infer_samples,
                    "CSV with vx,vy,reward rows")
      ->required();
  infer->add_option("--out", infer_out, "output z file");

  int oracle_states = 8, oracle_trials = 50;
  std::uint64_t oracle_seed = 0;
  bool oracle_fault = false;
  auto* oracle =
      app.add_subcommand("oracle-check", "exact finite-MDP invariants");
  oracle->add_option("--max-states", oracle_states, "largest state count");
  oracle->add_option("--trials", oracle_trials, "random MDPs");
  oracle->add_option("--seed", oracle_seed, "suite seed");
  oracle->add_flag("--inject-fault", oracle_fault,
                   "perturb the successor measure (negative-control hook)");

  std::vector<std::string> export_runs;
  std::string export_out = "export";
  auto* exporter = app.add_subcommand("export", "plot data from run dirs");
  exporter->add_option("--run", export_runs, "run directory (repeatable)")
      ->required();
  exporter->add_option("--out", export_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      train_opts.overrides = override_values;
      return cmd_train(train_opts);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_seed, eval_episodes, eval_out);
    }
    if (infer->parsed()) {
      return cmd_infer(infer_checkpoint, infer_samples, infer_out);
    }
    if (oracle->parsed()) {
      return cmd_oracle_check(oracle_states, oracle_trials, oracle_seed,
                              oracle_fault);
    }
    if (exporter->parsed()) {
      return cmd_export(export_runs, export_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
