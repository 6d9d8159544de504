#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ordlab/metric_sink.hpp"
#include "ordlab/model.hpp"
#include "ordlab/optim.hpp"
#include "ordlab/ordering.hpp"

namespace ordlab {

// What a counterfactual epoch needs to replay training from a snapshot. All
// state is copied; the caller's trajectory is never touched.
struct EpochEngine {
  const Model* model = nullptr;
  const std::vector<ExamplePair>* train = nullptr;
  AdamWConfig opt_cfg;
  double lr = 0.0;
  std::uint32_t batch_size = 0;
  std::uint64_t master_seed = 0;  // dropout streams match the real epoch's keying
};

// Trains one epoch from the snapshot under `plan`, capturing each per-batch
// gradient before its optimizer step; returns (1/N) sum g_i.
ParameterVector mean_epoch_gradient(const TrainingSnapshot& snap, const EpochEngine& eng,
                                    const PermutationPlan& plan);

struct LayerDecomposition {
  double content_norm = 0.0;
  double ordering_norm = 0.0;
  std::optional<double> ordering_fraction;   // energy ratio; undefined on zero actual
  std::optional<double> ordering_alignment;  // cos of layer slices
};

struct Decomposition {
  ParameterVector g_actual, g_content, g_ordering;
  double cf_mean_norm = 0.0;       // norm of the unnormalized shuffled mean
  double ordering_fraction = 0.0;  // |g_ordering|^2 / |g_actual|^2
  double ordering_alignment = 0.0; // cos(g_actual, g_cf_hat)
  std::map<std::string, LayerDecomposition> layers;
};

// g_cf_hat = mean(shuffled)/|mean|; g_content = (g_cf_hat . g_actual) g_cf_hat;
// g_ordering = g_actual - g_content. Throws on zero actual or shuffled mean.
Decomposition decompose(const ParameterVector& g_actual,
                        const std::vector<ParameterVector>& shuffled_means);

// Runs K shuffled epochs from `snap` (permutations from the
// "hook/counterfactual" stream keyed by epoch and k), decomposes `g_actual`,
// and emits the counterfactual hook's metric rows.
Decomposition counterfactual_hook(const TrainingSnapshot& snap, const EpochEngine& eng,
                                  const ParameterVector& g_actual, std::uint64_t epoch,
                                  int K, MetricSink& sink,
                                  const ParameterVector* theta_ref);

struct KValidationReport {
  double norm_gap = 0.0;    // (mean_K content norm - full content norm) / full
  double min_cosine = 0.0;  // min cos(subset mean, full mean)
  bool strictly_monotone = false;  // full norm strictly past every subset's, same side
  double full_content_norm = 0.0;
  std::vector<double> subset_content_norms;
};

// K+1 shuffled epochs, all leave-one-out K-subsets vs the full mean.
KValidationReport validate_k(const TrainingSnapshot& snap, const EpochEngine& eng,
                             const ParameterVector& g_actual, std::uint64_t epoch, int K);

}  // namespace ordlab
