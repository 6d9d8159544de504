#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "ordlab/checkpoint.hpp"
#include "ordlab/counterfactual.hpp"
#include "ordlab/experiment_config.hpp"
#include "ordlab/metric_sink.hpp"
#include "ordlab/metrics.hpp"
#include "ordlab/model.hpp"
#include "ordlab/spectral.hpp"

namespace ordlab {

struct RunResult {
  std::uint64_t epochs_run = 0;
  bool reached_target = false;
  std::uint64_t stop_epoch = 0;  // meaningful only when reached_target
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
};

// Deterministic single-threaded training loop with snapshot-isolated hooks.
// All randomness flows through counter-based streams keyed by
// (master_seed, purpose, epoch, step), so hooks can never perturb training.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);

  // Fresh run from init. Writes manifest/metrics/checkpoints when
  // output_dir is set.
  RunResult run();

  // Continue from a checkpoint; the continuation is byte-identical to an
  // uninterrupted run of the same config.
  RunResult resume(const std::filesystem::path& checkpoint);

  // Standalone K-sufficiency validation at the current parameters.
  KValidationReport validate_k_now(int K);

  const ExperimentConfig& config() const { return cfg_; }
  const Model& model() const { return model_; }
  const Dataset& dataset() const { return data_; }
  const ParameterVector& params() const { return theta_; }
  std::uint64_t epochs_completed() const { return epoch_; }
  const MemoryMetricSink& metrics() const { return memory_sink_; }

  // Runs `closure` against a value snapshot of (theta, optimizer); restores
  // both afterwards, even on failure. RNG streams are stateless, so nothing
  // else can leak.
  template <typename F>
  auto with_isolated_state(F&& closure) {
    TrainingSnapshot snap = take_snapshot(theta_, *opt_, epoch_);
    struct Restore {
      Trainer* t;
      TrainingSnapshot* s;
      ~Restore() { restore_snapshot(*s, t->theta_, *t->opt_); }
    } restore{this, &snap};
    return closure();
  }

 private:
  RunResult run_loop();
  void run_epoch(std::uint64_t epoch);
  void end_of_epoch_hooks(std::uint64_t epoch, const ParameterVector& g_mean,
                          double mean_loss, double lr,
                          const TrainingSnapshot* pre_epoch_snapshot);
  double eval_accuracy(std::uint64_t epoch, bool full, bool train_split) const;
  EpochEngine engine(double lr) const;
  void write_manifest(const RunResult* result) const;
  void write_checkpoint(const std::filesystem::path& path) const;
  void load_hook_state(HookState&& h);
  HookState hook_state_snapshot() const;

  ExperimentConfig cfg_;
  Model model_;
  Dataset data_;
  ParameterVector theta_;
  std::unique_ptr<AdamW> opt_;
  std::uint64_t epoch_ = 0;  // epochs completed

  // hook state (checkpointed)
  std::optional<ParameterVector> prev_grad_;
  PathTracker path_;
  std::optional<ParameterVector> prev_theta_;
  GradientWindow window_{50};
  FrequencyTracker embed_tracker_, decoder_tracker_;
  std::optional<ParameterVector> prev_e_;

  std::optional<ParameterVector> theta_ref_;
  std::optional<DftPlan> dft_;

  MemoryMetricSink memory_sink_;
  std::unique_ptr<FileMetricSink> file_sink_;
  TeeMetricSink sink_;

  // per-run bookkeeping
  double last_epoch_loss_ = 0.0;
};

}  // namespace ordlab
