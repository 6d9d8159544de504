#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ordlab/optim.hpp"
#include "ordlab/param_vector.hpp"

namespace ordlab {

// --- gradient norms (norms hook) ---

struct GradNormMetrics {
  double total_norm = 0.0;
  double max_component = 0.0;
  double mean_component = 0.0;
  std::map<std::string, double> per_layer;  // layer -> L2 norm
};
GradNormMetrics grad_norm_metrics(const ParameterVector& grad);

// --- consecutive epoch gradient alignment (consecutive hook) ---

struct ConsecutiveAlignment {
  double cos_sim = 0.0;
  double angle_degrees = 0.0;
};
// nullopt when either gradient has zero norm
std::optional<ConsecutiveAlignment> consecutive_cossim(const ParameterVector& g_t,
                                                       const ParameterVector& g_prev);

// --- weight norms / spectra / alignment (weight_tracking hook) ---

// Singular values of a 2-D matrix, descending, computed exactly via the
// smaller-side Gram matrix (deterministic, no iterative solver).
std::vector<double> singular_values(const Eigen::Ref<const MatrixRM>& m);

struct LayerWeightStats {
  double weight_norm = 0.0;
  std::optional<double> top_sv;          // matrices only
  std::optional<double> effective_rank;  // (sum sigma)^2 / sum sigma^2
  std::optional<double> grad_weight_align;
};

struct WeightTracking {
  std::map<std::string, LayerWeightStats> layers;
  double total_weight_norm = 0.0;
  double mean_weight_norm = 0.0;
  double mean_top_sv = 0.0;
  double max_top_sv = 0.0;
  double mean_effective_rank = 0.0;
  double mean_grad_weight_align = 0.0;
};
WeightTracking weight_tracking(const ParameterVector& params, const ParameterVector& grad);

// --- parameter deltas (parameter_delta hook) ---

struct ParameterDelta {
  std::optional<double> relative_delta;  // nullopt when the old norm is zero
  double absolute_delta = 0.0;
  double param_norm = 0.0;
};
ParameterDelta parameter_delta(const ParameterVector& theta_new,
                               const ParameterVector& theta_old);

// --- path geometry (path_length hook) ---

struct PathMetrics {
  double path_length = 0.0;
  double net_displacement = 0.0;
  double path_efficiency = 0.0;  // 0 when the path has zero length
};

class PathTracker {
 public:
  void reset(const ParameterVector& theta0);
  PathMetrics update(const ParameterVector& theta);
  bool initialized() const { return initialized_; }

  // checkpoint plumbing
  double accumulated_length() const { return length_; }
  const ParameterVector& origin() const { return theta0_; }
  const ParameterVector& previous() const { return prev_; }
  void restore(ParameterVector theta0, ParameterVector prev, double length);

 private:
  bool initialized_ = false;
  ParameterVector theta0_, prev_;
  double length_ = 0.0;
};

// --- batch-level gradient dynamics (batch_dynamics hook) ---

// Ring buffer of the last W per-batch gradients, stored in f32 to bound
// memory; all analytics run in f64.
class GradientWindow {
 public:
  explicit GradientWindow(std::size_t capacity = 50) : capacity_(capacity) {}

  void push(const ParameterVector& grad, std::uint64_t step);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() { entries_.clear(); }

  struct Entry {
    std::vector<float> g;
    std::uint64_t step = 0;
  };
  const std::deque<Entry>& entries() const { return entries_; }
  std::deque<Entry>& mutable_entries() { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct BatchDynamics {
  std::map<int, double> lag;         // n -> mean cos(g_t, g_{t-n}); computable lags only
  std::optional<double> autocorrelation_mean;
  std::map<int, double> efficiency;  // w -> |sum g|/sum|g| over the trailing w
  std::optional<double> effective_rank;  // SV-entropy form exp(-sum p log p)
  std::optional<double> top1_variance;
};
BatchDynamics batch_dynamics(const GradientWindow& window);

// --- projection onto a known solution (gradient_projection hook) ---

struct SolutionProjection {
  std::optional<double> overall;                  // cos(direction, theta_ref - theta)
  std::map<std::string, double> per_layer;
  double distance_to_reference = 0.0;
};
// `descent` flips the sign of `vec` (use for raw gradients; displacements pass false)
SolutionProjection projection_to_solution(const ParameterVector& vec,
                                          const ParameterVector& theta,
                                          const ParameterVector& theta_ref, bool descent);

// --- Adam introspection (adam_dynamics hook) ---

struct AdamIntrospection {
  std::optional<double> momentum_grad_cossim;
  std::optional<double> amplification_ratio;  // |update| / |lr * g|
  std::optional<double> update_deflection;    // |update_perp| / |update|
  std::optional<double> effective_lr_cv;
  // Tier 2, present only with a reference model
  std::optional<double> momentum_solution_cossim;
  std::optional<double> update_solution_cossim;
  std::optional<double> grad_solution_cossim;
  std::optional<double> optimizer_solution_amplification;
};
// `update` must exclude the decoupled weight-decay term.
AdamIntrospection adam_introspect(const AdamW& opt, const ParameterVector& grad,
                                  const ParameterVector& update, double lr,
                                  const ParameterVector& theta,
                                  const ParameterVector* theta_ref);

// The Adam update (lr * mhat / (sqrt(vhat) + eps)) that `opt` would apply for
// `grad`, computed without mutating optimizer state and without weight decay.
ParameterVector adam_update_vector(const AdamW& opt, const ParameterVector& grad, double lr);

}  // namespace ordlab
