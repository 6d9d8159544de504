#include "ordlab/hessian_probe.hpp"

#include <cmath>
#include <stdexcept>

namespace ordlab {

ParameterVector hvp_fd(const GradFn& grad_fn, const ParameterVector& theta_prime,
                       const ParameterVector& v, const ParameterVector* g_at_base) {
  const double v_norm = v.norm();
  if (v_norm == 0.0) throw std::invalid_argument("degenerate input: zero probe vector");
  const double eps = 1e-4 / v_norm;

  ParameterVector shifted = theta_prime;
  shifted.axpy(eps, v);
  ParameterVector hv = grad_fn(shifted);
  if (g_at_base) {
    hv -= *g_at_base;
  } else {
    hv -= grad_fn(theta_prime);
  }
  hv.scale(1.0 / eps);
  return hv;
}

ParameterVector hvp_central(const GradFn& grad_fn, const ParameterVector& theta_prime,
                            const ParameterVector& v) {
  const double v_norm = v.norm();
  if (v_norm == 0.0) throw std::invalid_argument("degenerate input: zero probe vector");
  const double eps = 1e-4 / v_norm;

  ParameterVector up = theta_prime;
  up.axpy(eps, v);
  ParameterVector down = theta_prime;
  down.axpy(-eps, v);
  ParameterVector hv = grad_fn(up);
  hv -= grad_fn(down);
  hv.scale(1.0 / (2.0 * eps));
  return hv;
}

EntanglementStep entanglement_step(const GradFn& grad_fn, const ParameterVector& theta_prime,
                                   const ParameterVector& probe_vector, double eta,
                                   const ParameterVector* prev_e) {
  EntanglementStep out;
  ParameterVector g_obs = grad_fn(theta_prime);
  ParameterVector hv = hvp_fd(grad_fn, theta_prime, probe_vector, &g_obs);

  out.e = hv;
  out.e.scale(eta);
  out.c = g_obs;
  out.c += out.e;

  out.observed_norm = g_obs.norm();
  out.entanglement_norm = out.e.norm();
  out.content_norm = out.c.norm();

  const double obs_sq = out.observed_norm * out.observed_norm;
  if (obs_sq > 0.0)
    out.energy_ratio = out.entanglement_norm * out.entanglement_norm / obs_sq;
  {
    const double cc = cosine(out.e, out.c);
    if (!std::isnan(cc)) out.ent_content_cossim = cc;
  }
  const double probe_sq = probe_vector.squared_norm();
  if (probe_sq > 0.0) {
    out.rayleigh_quotient = probe_vector.dot(hv) / probe_sq;
    const double amp = hv.norm() / std::sqrt(probe_sq);
    out.amplification_ratio = amp;
    out.edge_of_stability = amp * 2.0 * eta;
  }
  if (prev_e) {
    const double co = cosine(out.e, *prev_e);
    if (!std::isnan(co)) out.coherence = co;
  }

  for (const auto& seg : theta_prime.registry()->segments()) {
    EntanglementStep::Layer lay;
    lay.entanglement_norm = std::sqrt(segment_squared_norm(out.e.segment(seg.name)));
    lay.content_norm = std::sqrt(segment_squared_norm(out.c.segment(seg.name)));
    const double obs_layer_sq = segment_squared_norm(g_obs.segment(seg.name));
    if (obs_layer_sq > 0.0)
      lay.energy_ratio = lay.entanglement_norm * lay.entanglement_norm / obs_layer_sq;
    out.layers[seg.name] = lay;
  }
  return out;
}

namespace {

void emit_opt(MetricSink& sink, std::uint64_t epoch, const std::string& key,
              const std::optional<double>& v) {
  if (v)
    sink.emit("hessian", epoch, key, *v);
  else
    sink.emit_undefined("hessian", epoch, key);
}

}  // namespace

void emit_entanglement(const EntanglementStep& step, std::uint64_t epoch, MetricSink& sink,
                       const ParameterVector* theta_prime,
                       const ParameterVector* theta_ref) {
  const std::string h = "hessian";
  sink.emit(h, epoch, "entanglement_norm", step.entanglement_norm);
  sink.emit(h, epoch, "content_norm", step.content_norm);
  sink.emit(h, epoch, "observed_grad_norm", step.observed_norm);
  emit_opt(sink, epoch, "entanglement_energy_ratio", step.energy_ratio);
  emit_opt(sink, epoch, "entanglement_content_cossim", step.ent_content_cossim);
  emit_opt(sink, epoch, "rayleigh_quotient", step.rayleigh_quotient);
  emit_opt(sink, epoch, "amplification_ratio", step.amplification_ratio);
  emit_opt(sink, epoch, "edge_of_stability", step.edge_of_stability);
  emit_opt(sink, epoch, "entanglement_coherence", step.coherence);

  for (const auto& [layer, lay] : step.layers) {
    sink.emit(h, epoch, "entanglement_norm/" + layer, lay.entanglement_norm);
    sink.emit(h, epoch, "content_norm/" + layer, lay.content_norm);
    emit_opt(sink, epoch, "entanglement_energy_ratio/" + layer, lay.energy_ratio);
  }

  if (theta_ref && theta_prime) {
    ParameterVector target = *theta_ref;
    target -= *theta_prime;
    auto sol = [&](const ParameterVector& comp) -> std::optional<double> {
      ParameterVector neg = comp;
      neg.scale(-1.0);
      const double c = cosine(neg, target);
      if (std::isnan(c)) return std::nullopt;
      return c;
    };
    emit_opt(sink, epoch, "entanglement_cossim_to_solution", sol(step.e));
    emit_opt(sink, epoch, "content_cossim_to_solution", sol(step.c));
    for (const auto& seg : theta_prime->registry()->segments()) {
      auto layer_sol = [&](const ParameterVector& comp) -> std::optional<double> {
        auto cs = comp.segment(seg.name);
        std::vector<double> neg(cs.begin(), cs.end());
        for (double& x : neg) x = -x;
        const double c = cosine(std::span<const double>(neg), target.segment(seg.name));
        if (std::isnan(c)) return std::nullopt;
        return c;
      };
      emit_opt(sink, epoch, "entanglement_cossim_to_solution/" + seg.name, layer_sol(step.e));
      emit_opt(sink, epoch, "content_cossim_to_solution/" + seg.name, layer_sol(step.c));
    }
  }
}

}  // namespace ordlab
