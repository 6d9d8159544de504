#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "ordlab/metric_sink.hpp"
#include "ordlab/model.hpp"
#include "ordlab/param_vector.hpp"

namespace ordlab {

// Gradient oracle at a point; the probe never needs the loss value. For the
// real model this wraps an eval-mode (dropout-free) loss_and_grad on batch B.
using GradFn = std::function<ParameterVector(const ParameterVector&)>;

// Forward-difference Hessian-vector product:
//   (grad(theta' + eps v) - grad(theta')) / eps,  eps = 1e-4 / |v|.
// Pass g_at_base to reuse an already-computed grad(theta').
ParameterVector hvp_fd(const GradFn& grad_fn, const ParameterVector& theta_prime,
                       const ParameterVector& v,
                       const ParameterVector* g_at_base = nullptr);

// Central-difference variant, for oracle tests only.
ParameterVector hvp_central(const GradFn& grad_fn, const ParameterVector& theta_prime,
                            const ParameterVector& v);

struct EntanglementStep {
  ParameterVector e;  // eta * H_B g_A
  ParameterVector c;  // g_B_obs + e
  double observed_norm = 0.0;
  double entanglement_norm = 0.0;
  double content_norm = 0.0;
  std::optional<double> energy_ratio;       // |e|^2 / |g_B_obs|^2
  std::optional<double> ent_content_cossim;
  std::optional<double> rayleigh_quotient;  // g_A^T H_B g_A / |g_A|^2
  std::optional<double> amplification_ratio;
  std::optional<double> edge_of_stability;  // amplification * 2 eta
  std::optional<double> coherence;          // cos(e_t, e_{t-1}); needs predecessor

  struct Layer {
    double entanglement_norm = 0.0;
    double content_norm = 0.0;
    std::optional<double> energy_ratio;
  };
  std::map<std::string, Layer> layers;
};

// One probe around a real optimizer step: g_A was captured before the step,
// theta' is the post-step parameter vector, grad_fn evaluates batch B there.
// `probe_vector` is g_A in the A.3.1 form; pass the actual displacement
// (theta - theta') / eta-scaled variant through the same argument when the
// displacement flag is chosen by the caller.
EntanglementStep entanglement_step(const GradFn& grad_fn, const ParameterVector& theta_prime,
                                   const ParameterVector& probe_vector, double eta,
                                   const ParameterVector* prev_e = nullptr);

// Emits hessian-hook rows for one probed step (per-layer keys included).
void emit_entanglement(const EntanglementStep& step, std::uint64_t epoch, MetricSink& sink,
                       const ParameterVector* theta_prime,
                       const ParameterVector* theta_ref);

}  // namespace ordlab
