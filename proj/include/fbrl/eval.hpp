#pragma once

#include <string>
#include <vector>

#include "fbrl/env.hpp"
#include "fbrl/trainer.hpp"

namespace fbrl {

struct TaskResult {
  TaskSpec task;
  Vecf z;             // inferred task embedding
  double mean_return = 0.0;
  double std_return = 0.0;
};

struct EvalReport {
  std::vector<TaskResult> tasks;
  double mean_return_overall = 0.0;
  double behavior_entropy = 0.0;
  double mean_action_rate = 0.0;  // penalty magnitude over eval episodes
  std::int64_t episodes_per_task = 0;
};

// Zero-shot evaluation of a checkpoint on the 17-command grid: for each task
// the embedding is inferred from reward-labeled buffer samples, then rolled
// out noiselessly. Requires the checkpoint's buffer snapshot for inference.
EvalReport run_eval(const std::string& checkpoint_dir, std::uint64_t eval_seed,
                    std::int64_t episodes_override = -1,
                    std::int64_t inference_samples_override = -1);

std::string eval_report_csv(const EvalReport& report, const std::string& mode,
                            std::uint64_t seed);

}  // namespace fbrl
