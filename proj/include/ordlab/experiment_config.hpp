#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "ordlab/model.hpp"
#include "ordlab/optim.hpp"
#include "ordlab/ordering.hpp"
#include "ordlab/task_data.hpp"

namespace ordlab {

// Per-hook emission cadence in epochs; 0 disables a hook.
struct HookSchedule {
  std::map<std::string, std::uint64_t> cadence;
  int counterfactual_k = 3;
  std::uint64_t hessian_burst = 10;
  // probe vector variant: Hessian applied to the actual parameter displacement
  // instead of the raw prior gradient
  bool hessian_displacement_form = false;

  static HookSchedule defaults();
  bool due(const std::string& hook, std::uint64_t epoch) const;
  void validate() const;
};

struct ExperimentConfig {
  TaskSpec task;
  ModelConfig model;
  ScheduleSpec schedule;
  AdamWConfig optimizer;
  Strategy strategy = Strategy::kRandom;
  std::uint32_t stride = 0;  // 0 = floor(sqrt(p))
  std::uint32_t batch_size = 32;
  std::uint64_t max_epochs = 0;
  double target_accuracy = 0.995;
  std::uint64_t master_seed = 0;
  std::uint64_t eval_subset = 10000;  // per-epoch seeded subsample; full set confirms stops
  bool full_eval = false;
  std::uint64_t checkpoint_every = 0;  // 0 = final checkpoint only
  HookSchedule hooks;
  std::filesystem::path reference_model;  // optional checkpoint for Tier-2 metrics
  std::filesystem::path output_dir;       // empty = no files, in-memory metrics only

  void validate() const;
};

// Strict JSON parsing: unknown keys anywhere are errors; every reported
// problem carries its JSON path.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::filesystem::path& path);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ordlab
