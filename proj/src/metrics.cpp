#include "ordlab/metrics.hpp"

#include <cmath>
#include <numbers>

namespace ordlab {

GradNormMetrics grad_norm_metrics(const ParameterVector& grad) {
  GradNormMetrics out;
  double sq = 0.0, abs_sum = 0.0, abs_max = 0.0;
  for (double v : grad.flat()) {
    sq += v * v;
    const double a = std::abs(v);
    abs_sum += a;
    abs_max = std::max(abs_max, a);
  }
  out.total_norm = std::sqrt(sq);
  out.max_component = abs_max;
  out.mean_component = grad.size() ? abs_sum / static_cast<double>(grad.size()) : 0.0;
  for (const auto& seg : grad.registry()->segments())
    out.per_layer[seg.name] = std::sqrt(segment_squared_norm(grad.segment(seg.name)));
  return out;
}

std::optional<ConsecutiveAlignment> consecutive_cossim(const ParameterVector& g_t,
                                                       const ParameterVector& g_prev) {
  const double c = cosine(g_t, g_prev);
  if (std::isnan(c)) return std::nullopt;
  return ConsecutiveAlignment{c, std::acos(c) * 180.0 / std::numbers::pi};
}

std::vector<double> singular_values(const Eigen::Ref<const MatrixRM>& m) {
  const Eigen::Index r = m.rows(), c = m.cols();
  Eigen::MatrixXd gram;
  if (r <= c)
    gram = m * m.transpose();
  else
    gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  std::vector<double> sv;
  sv.reserve(static_cast<std::size_t>(es.eigenvalues().size()));
  // eigenvalues ascend; emit descending singular values
  for (Eigen::Index i = es.eigenvalues().size() - 1; i >= 0; --i)
    sv.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i))));
  return sv;
}

WeightTracking weight_tracking(const ParameterVector& params, const ParameterVector& grad) {
  WeightTracking out;
  double total_sq = 0.0, norm_sum = 0.0, sv_sum = 0.0, er_sum = 0.0, align_sum = 0.0;
  std::size_t n_layers = 0, n_matrix = 0, n_align = 0;
  for (const auto& seg : params.registry()->segments()) {
    LayerWeightStats st;
    st.weight_norm = std::sqrt(segment_squared_norm(params.segment(seg.name)));
    if (seg.is_matrix()) {
      auto sv = singular_values(params.matrix(seg.name));
      double s1 = 0.0, s2 = 0.0;
      for (double s : sv) {
        s1 += s;
        s2 += s * s;
      }
      st.top_sv = sv.empty() ? 0.0 : sv.front();
      st.effective_rank = s2 > 0.0 ? s1 * s1 / s2 : 0.0;
      sv_sum += *st.top_sv;
      out.max_top_sv = std::max(out.max_top_sv, *st.top_sv);
      er_sum += *st.effective_rank;
      ++n_matrix;
    }
    const double a = cosine(grad.segment(seg.name), params.segment(seg.name));
    if (!std::isnan(a)) {
      st.grad_weight_align = a;
      align_sum += a;
      ++n_align;
    }
    total_sq += st.weight_norm * st.weight_norm;
    norm_sum += st.weight_norm;
    ++n_layers;
    out.layers[seg.name] = st;
  }
  out.total_weight_norm = std::sqrt(total_sq);
  if (n_layers) out.mean_weight_norm = norm_sum / static_cast<double>(n_layers);
  if (n_matrix) {
    out.mean_top_sv = sv_sum / static_cast<double>(n_matrix);
    out.mean_effective_rank = er_sum / static_cast<double>(n_matrix);
  }
  if (n_align) out.mean_grad_weight_align = align_sum / static_cast<double>(n_align);
  return out;
}

ParameterDelta parameter_delta(const ParameterVector& theta_new,
                               const ParameterVector& theta_old) {
  ParameterDelta out;
  ParameterVector diff = theta_new;
  diff -= theta_old;
  out.absolute_delta = diff.norm();
  out.param_norm = theta_new.norm();
  const double old_norm = theta_old.norm();
  if (old_norm > 0.0) out.relative_delta = out.absolute_delta / old_norm;
  return out;
}

void PathTracker::reset(const ParameterVector& theta0) {
  theta0_ = theta0;
  prev_ = theta0;
  length_ = 0.0;
  initialized_ = true;
}

PathMetrics PathTracker::update(const ParameterVector& theta) {
  if (!initialized_) throw std::logic_error("PathTracker::update before reset");
  ParameterVector step = theta;
  step -= prev_;
  length_ += step.norm();
  prev_ = theta;
  ParameterVector net = theta;
  net -= theta0_;
  PathMetrics out;
  out.path_length = length_;
  out.net_displacement = net.norm();
  out.path_efficiency = length_ > 0.0 ? out.net_displacement / length_ : 0.0;
  return out;
}

void PathTracker::restore(ParameterVector theta0, ParameterVector prev, double length) {
  theta0_ = std::move(theta0);
  prev_ = std::move(prev);
  length_ = length;
  initialized_ = true;
}

void GradientWindow::push(const ParameterVector& grad, std::uint64_t step) {
  Entry e;
  e.step = step;
  e.g.resize(grad.size());
  const double* src = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) e.g[i] = static_cast<float>(src[i]);
  entries_.push_back(std::move(e));
  if (entries_.size() > capacity_) entries_.pop_front();
}

namespace {

double dot_f64(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

}  // namespace

BatchDynamics batch_dynamics(const GradientWindow& window) {
  BatchDynamics out;
  const auto& es = window.entries();
  const std::size_t n = es.size();
  if (n == 0) return out;

  // Gram matrix of the window in f64; everything below reads from it.
  Eigen::MatrixXd gram(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) gram(i, j) = gram(j, i) = dot_f64(es[i].g, es[j].g);

  auto cos_ij = [&](std::size_t i, std::size_t j) -> std::optional<double> {
    const double ni = gram(i, i), nj = gram(j, j);
    if (ni <= 0.0 || nj <= 0.0) return std::nullopt;
    return gram(i, j) / std::sqrt(ni * nj);
  };

  static constexpr int kLags[] = {1, 2, 5, 10, 20, 50};
  double lag_sum = 0.0;
  int lag_count = 0;
  for (int lag : kLags) {
    if (static_cast<std::size_t>(lag) >= n) continue;
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t t = static_cast<std::size_t>(lag); t < n; ++t)
      if (auto c = cos_ij(t, t - lag)) {
        acc += *c;
        ++cnt;
      }
    if (cnt > 0) {
      out.lag[lag] = acc / static_cast<double>(cnt);
      lag_sum += out.lag[lag];
      ++lag_count;
    }
  }
  if (lag_count > 0) out.autocorrelation_mean = lag_sum / lag_count;

  static constexpr int kWins[] = {2, 5, 10, 20, 50};
  for (int w : kWins) {
    if (static_cast<std::size_t>(w) > n) continue;
    const std::size_t begin = n - static_cast<std::size_t>(w);
    double sum_sq = 0.0, norm_sum = 0.0;
    for (std::size_t i = begin; i < n; ++i) {
      for (std::size_t j = begin; j < n; ++j) sum_sq += gram(i, j);
      norm_sum += std::sqrt(std::max(0.0, gram(i, i)));
    }
    if (norm_sum > 0.0) out.efficiency[w] = std::sqrt(std::max(0.0, sum_sq)) / norm_sum;
  }

  // SV-entropy effective rank of the stacked window via the Gram spectrum
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esolve(gram);
  double total = 0.0;
  for (Eigen::Index i = 0; i < esolve.eigenvalues().size(); ++i)
    total += std::max(0.0, esolve.eigenvalues()(i));
  if (total > 0.0) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < esolve.eigenvalues().size(); ++i) {
      const double p = std::max(0.0, esolve.eigenvalues()(i)) / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    out.effective_rank = std::exp(h);
    out.top1_variance = esolve.eigenvalues().maxCoeff() / total;
  }
  return out;
}

SolutionProjection projection_to_solution(const ParameterVector& vec,
                                          const ParameterVector& theta,
                                          const ParameterVector& theta_ref, bool descent) {
  SolutionProjection out;
  ParameterVector target = theta_ref;
  target -= theta;
  out.distance_to_reference = target.norm();
  ParameterVector dir = vec;
  if (descent) dir.scale(-1.0);
  const double overall = cosine(dir, target);
  if (!std::isnan(overall)) out.overall = overall;
  for (const auto& seg : vec.registry()->segments()) {
    const double c = cosine(dir.segment(seg.name), target.segment(seg.name));
    if (!std::isnan(c)) out.per_layer[seg.name] = c;
  }
  return out;
}

ParameterVector adam_update_vector(const AdamW& opt, const ParameterVector& grad, double lr) {
  const auto& cfg = opt.config();
  const double t = static_cast<double>(opt.t()) + 1.0;  // the step this grad would take
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  ParameterVector update(grad.registry());
  const double* g = grad.data();
  const double* m = opt.m().data();
  const double* v = opt.v().data();
  double* u = update.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double mn = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    const double vn = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    u[i] = lr * (mn / bc1) / (std::sqrt(vn / bc2) + cfg.eps);
  }
  return update;
}

AdamIntrospection adam_introspect(const AdamW& opt, const ParameterVector& grad,
                                  const ParameterVector& update, double lr,
                                  const ParameterVector& theta,
                                  const ParameterVector* theta_ref) {
  AdamIntrospection out;
  const double g_norm = grad.norm();
  const double u_norm = update.norm();

  const double mg = cosine(opt.m(), grad);
  if (!std::isnan(mg)) out.momentum_grad_cossim = mg;

  if (g_norm > 0.0 && lr > 0.0) out.amplification_ratio = u_norm / (lr * g_norm);

  if (u_norm > 0.0 && g_norm > 0.0) {
    const double proj = grad.dot(update) / (g_norm * g_norm);
    ParameterVector perp = update;
    perp.axpy(-proj, grad);
    out.update_deflection = perp.norm() / u_norm;
  }

  {
    const auto& cfg = opt.config();
    const double t = static_cast<double>(opt.t());
    if (t > 0.0) {
      const double bc2 = 1.0 - std::pow(cfg.beta2, t);
      double mean = 0.0;
      const double* v = opt.v().data();
      const std::size_t n = opt.v().size();
      std::vector<double> eff(n);
      for (std::size_t i = 0; i < n; ++i) {
        eff[i] = lr / (std::sqrt(std::max(0.0, v[i]) / bc2) + cfg.eps);
        mean += eff[i];
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double e : eff) var += (e - mean) * (e - mean);
      var /= static_cast<double>(n);
      if (mean > 0.0) out.effective_lr_cv = std::sqrt(var) / mean;
    }
  }

  if (theta_ref) {
    ParameterVector target = *theta_ref;
    target -= theta;
    auto maybe = [&](const ParameterVector& v) -> std::optional<double> {
      const double c = cosine(v, target);
      return std::isnan(c) ? std::nullopt : std::optional<double>(c);
    };
    // literal forms: raw vectors against theta_ref - theta, no sign flips
    out.momentum_solution_cossim = maybe(opt.m());
    out.update_solution_cossim = maybe(update);
    out.grad_solution_cossim = maybe(grad);
    if (out.update_solution_cossim && out.grad_solution_cossim)
      out.optimizer_solution_amplification =
          *out.update_solution_cossim - *out.grad_solution_cossim;
  }
  return out;
}

}  // namespace ordlab
