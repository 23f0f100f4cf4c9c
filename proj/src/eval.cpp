#include "fbrl/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "fbrl/errors.hpp"
#include "fbrl/explorer.hpp"
#include "fbrl/replay.hpp"

namespace fbrl {

namespace fs = std::filesystem;

EvalReport run_eval(const std::string& checkpoint_dir, std::uint64_t eval_seed,
                    std::int64_t episodes_override,
                    std::int64_t inference_samples_override) {
  const LoadedAgent agent = load_agent(checkpoint_dir);
  const EnvParams env = agent.cfg.env_params();

  const std::string buffer_path =
      (fs::path(checkpoint_dir) / "buffer.bin").string();
  if (!fs::exists(buffer_path)) {
    throw MissingArtifactError(
        "no buffer snapshot at " + buffer_path +
        "; run training (or export one) before evaluating, task inference "
        "needs reward-labeled buffer samples");
  }
  ReplayBuffer buffer(static_cast<std::size_t>(agent.cfg.buffer_capacity),
                      static_cast<std::size_t>(agent.cfg.goal_buffer_capacity),
                      0, env);
  buffer.load(buffer_path);
  if (buffer.size() == 0) {
    throw MissingArtifactError("buffer snapshot is empty: " + buffer_path);
  }

  const std::int64_t episodes =
      episodes_override > 0 ? episodes_override : agent.cfg.eval_episodes;
  const std::int64_t inference_samples =
      inference_samples_override > 0 ? inference_samples_override
                                     : agent.cfg.inference_samples;

  Rng rng(eval_seed);
  EvalReport report;
  report.episodes_per_task = episodes;
  double return_sum = 0.0;
  double action_rate_sum = 0.0;
  std::int64_t action_rate_count = 0;

  for (const TaskSpec& task : task_grid()) {
    // Reward-labeled inference samples from the buffer's next states.
    const auto count = static_cast<Eigen::Index>(
        std::min<std::int64_t>(inference_samples,
                               static_cast<std::int64_t>(buffer.size())));
    Matf phi(count, kProjDim);
    Vecf rewards(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      const Transition& t = buffer.at(
          static_cast<std::size_t>(rng.bounded(buffer.size())));
      phi.row(i) = project(t.s_next).transpose();
      rewards[i] = task_reward(t.s_next, task);
    }
    const LatentZ z = infer_task_embedding(agent.model, phi, rewards);

    TaskResult result;
    result.task = task;
    result.z = z.z;
    std::vector<double> returns;
    returns.reserve(static_cast<std::size_t>(episodes));
    for (std::int64_t ep = 0; ep < episodes; ++ep) {
      EnvState state = env_reset(rng);
      double ep_return = 0.0;
      for (int step = 0; step < env.episode_len; ++step) {
        const Action a = policy_action(agent.model, state, z.z, 0.0f, rng,
                                       env);
        const StepResult r = env_step(state, a, env);
        ep_return += task_reward(r.state, task);
        action_rate_sum -=
            reg_reward(r.state, a, state.prev_action);
        ++action_rate_count;
        state = r.state;
        if (r.done) break;
      }
      returns.push_back(ep_return);
    }
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(returns.size());
    result.mean_return = mean;
    result.std_return = std::sqrt(var);
    return_sum += mean;
    report.tasks.push_back(std::move(result));
  }

  report.mean_return_overall =
      return_sum / static_cast<double>(report.tasks.size());
  report.mean_action_rate =
      action_rate_count > 0
          ? action_rate_sum / static_cast<double>(action_rate_count)
          : 0.0;
  GridSpec grid;
  grid.lo = -agent.cfg.env_v_max;
  grid.hi = agent.cfg.env_v_max;
  grid.bins = static_cast<int>(agent.cfg.entropy_bins);
  report.behavior_entropy =
      behavior_entropy(buffer.recent_projections(static_cast<std::size_t>(
                           agent.cfg.entropy_window)),
                       grid)
          .entropy;
  return report;
}

std::string eval_report_csv(const EvalReport& report, const std::string& mode,
                            std::uint64_t seed) {
  std::ostringstream out;
  char buf[64];
  out << "# behavior_entropy=" << report.behavior_entropy
      << " mean_action_rate=" << report.mean_action_rate
      << " episodes_per_task=" << report.episodes_per_task << "\n";
  out << "mode,seed,task_id,target_vx,target_vy,mean_return,std_return\n";
  for (std::size_t i = 0; i < report.tasks.size(); ++i) {
    const TaskResult& t = report.tasks[i];
    std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.10g,%.10g",
                  static_cast<double>(t.task.target_vel.x()),
                  static_cast<double>(t.task.target_vel.y()), t.mean_return,
                  t.std_return);
    out << mode << ',' << seed << ',' << i << ',' << buf << "\n";
  }
  return out.str();
}

}  // namespace fbrl
