#include "ordlab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ordlab {

double cosine_lr(const ScheduleSpec& sched, std::uint64_t epoch) {
  if (sched.total_epochs == 0) throw std::invalid_argument("total_epochs must be > 0");
  if (epoch >= sched.total_epochs) return sched.lr_min;
  const double frac = static_cast<double>(epoch) / static_cast<double>(sched.total_epochs);
  return sched.lr_min +
         0.5 * (sched.lr_max - sched.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamW::AdamW(RegistryPtr reg, AdamWConfig cfg)
    : cfg_(cfg), m_(reg), v_(std::move(reg)) {}

void AdamW::step(ParameterVector& theta, const ParameterVector& grad, double lr) {
  if (theta.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("optimizer/parameter size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  double* th = theta.data();
  const double* g = grad.data();
  double* m = m_.data();
  double* v = v_.data();
  const std::size_t n = theta.size();
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    // decoupled decay, applied outside the adaptive step
    th[i] -= lr * cfg_.weight_decay * th[i];
    th[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

void AdamW::restore(const State& s) {
  if (s.m.size() != m_.size() || s.v.size() != v_.size())
    throw std::invalid_argument("optimizer state size mismatch");
  m_ = s.m;
  v_ = s.v;
  t_ = s.t;
}

TrainingSnapshot take_snapshot(const ParameterVector& theta, const AdamW& opt,
                               std::uint64_t epoch) {
  return {theta, opt.state(), epoch};
}

void restore_snapshot(const TrainingSnapshot& snap, ParameterVector& theta, AdamW& opt) {
  theta = snap.theta;
  opt.restore(snap.opt);
}

}  // namespace ordlab
