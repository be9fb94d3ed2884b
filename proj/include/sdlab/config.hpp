#pragma once

// JSON configuration files. Errors are reported as ConfigError with a
// "path:line: message" prefix so the CLI can print them verbatim.
//
// Run config:
//   { "task":  { "seed": 0, "num_questions": 64, "vocab": 8, "length": 2,
//                "context_dim": 16, "difficulty": "uniform -1 3" },
//     "train": { "method": "sc_sdpo", "alpha": 0.5, ... } }
// "task" may instead be "task_file": "<path to a saved task JSON>".
//
// Sweep spec: a run config plus
//   "methods": [ { "label": "sc_sdpo_a05", "method": "sc_sdpo", "alpha": 0.5 }, ... ],
//   "seeds": [0, 1, 2], "out": "results/", "jobs": 4
// Each method entry overrides keys of "train".

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdlab/env.hpp"
#include "sdlab/trainer.hpp"

namespace sdlab {

struct RunConfig {
  TaskParams task_params;
  std::filesystem::path task_file;  // empty: generate from task_params
  TrainConfig train;

  Task make_task() const;
};

struct SweepMethod {
  std::string label;
  TrainConfig train;  // seed is overwritten per run
};

struct ExperimentSpec {
  RunConfig base;
  std::vector<SweepMethod> methods;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;
  std::size_t jobs = 1;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");

ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
ExperimentSpec parse_experiment_spec(const std::string& text,
                                     const std::string& origin = "<spec>");

// Apply keys of a JSON object to a TrainConfig; unknown keys are errors.
void apply_train_json(const nlohmann::json& j, TrainConfig& cfg);
void apply_task_json(const nlohmann::json& j, TaskParams& params);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
nlohmann::json task_params_to_json(const TaskParams& params);

}  // namespace sdlab
