#include "ordlab/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ordlab {

DftPlan::DftPlan(std::uint32_t p) : p_(p), cos_(p), sin_(p) {
  if (p < 2) throw std::invalid_argument("DFT modulus must be >= 2");
  for (std::uint32_t m = 0; m < p; ++m) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(m) / p;
    cos_[m] = std::cos(angle);
    sin_[m] = std::sin(angle);
  }
}

void DftPlan::accumulate_power(const double* signal, double* power) const {
  const std::uint64_t p = p_;
  for (std::uint64_t k = 0; k < p; ++k) {
    double re = 0.0, im = 0.0;
    std::uint64_t m = 0;  // (k*j) mod p maintained incrementally
    for (std::uint64_t j = 0; j < p; ++j) {
      re += signal[j] * cos_[m];
      im += signal[j] * sin_[m];
      m += k;
      if (m >= p) m -= p;
    }
    power[k] += re * re + im * im;
  }
}

namespace {

PowerSpectrum normalize(std::uint32_t p, std::vector<double> power) {
  double total = 0.0;
  for (double v : power) total += v;
  if (total <= 0.0) throw std::invalid_argument("degenerate input: zero spectral power");
  for (double& v : power) v /= total;
  return {p, std::move(power)};
}

}  // namespace

PowerSpectrum weight_spectrum(const Eigen::Ref<const MatrixRM>& weights, const DftPlan& plan) {
  const auto p = plan.p();
  if (weights.rows() != static_cast<Eigen::Index>(p))
    throw std::invalid_argument("weight matrix row count must equal p");
  std::vector<double> power(p, 0.0);
  std::vector<double> col(p);
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < weights.rows(); ++r) col[r] = weights(r, c);
    plan.accumulate_power(col.data(), power.data());
  }
  return normalize(p, std::move(power));
}

PowerSpectrum column_spectrum(const Eigen::Ref<const MatrixRM>& weights, Eigen::Index col,
                              const DftPlan& plan) {
  const auto p = plan.p();
  if (weights.rows() != static_cast<Eigen::Index>(p))
    throw std::invalid_argument("weight matrix row count must equal p");
  std::vector<double> power(p, 0.0);
  std::vector<double> sig(p);
  for (Eigen::Index r = 0; r < weights.rows(); ++r) sig[r] = weights(r, col);
  plan.accumulate_power(sig.data(), power.data());
  return normalize(p, std::move(power));
}

double spectral_entropy(const PowerSpectrum& ps) {
  double h = 0.0;
  for (double v : ps.P)
    if (v > 0.0) h -= v * std::log(v);
  return h / std::log(static_cast<double>(ps.p));
}

std::uint32_t peak_frequency(const PowerSpectrum& ps) {
  const auto half = static_cast<std::uint32_t>(ps.p / 2) + (ps.p % 2);  // k < p/2
  std::uint32_t best = 1;
  for (std::uint32_t k = 2; k < half; ++k)
    if (ps.P[k] > ps.P[best]) best = k;
  return best;
}

std::vector<std::uint32_t> significant_frequencies(const PowerSpectrum& ps) {
  const double threshold = 10.0 / ps.p;
  const auto half = static_cast<std::uint32_t>(ps.p / 2) + (ps.p % 2);
  std::vector<std::uint32_t> out;
  for (std::uint32_t k = 1; k < half; ++k)
    if (ps.P[k] > threshold) out.push_back(k);
  return out;
}

std::vector<std::uint32_t> harmonic_series(std::uint32_t F, std::uint32_t p,
                                           std::size_t count) {
  if (F < 1 || F >= p) throw std::invalid_argument("fundamental must satisfy 1 <= F < p");
  std::vector<std::uint32_t> out;
  out.reserve(count);
  std::uint64_t f = F;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t m = f % p;
    out.push_back(static_cast<std::uint32_t>(2 * m > p ? p - m : m));
    f = (2 * f) % p;
  }
  return out;
}

double low_freq_power(const PowerSpectrum& ps) {
  const double c = std::max(static_cast<double>(ps.p) / 20.0, 10.0);
  double acc = 0.0;
  for (std::uint32_t k = 0; k < ps.p && static_cast<double>(k) < c; ++k) acc += ps.P[k];
  return acc;
}

double stride_harmonic_power(const PowerSpectrum& ps) {
  const auto s = static_cast<std::uint32_t>(
      std::floor(std::sqrt(static_cast<double>(ps.p))));
  double acc = 0.0;
  for (std::uint32_t k = 1; k <= 9; ++k) {
    const std::uint64_t idx = static_cast<std::uint64_t>(k) * s;
    if (idx < ps.p) acc += ps.P[idx];
  }
  return acc;
}

NeuronSpectralSummary neuron_spectral_summary(const Eigen::Ref<const MatrixRM>& weights,
                                              const DftPlan& plan) {
  NeuronSpectralSummary sum;
  const Eigen::Index d = weights.cols();
  if (d == 0) return sum;
  std::size_t counted = 0;
  for (Eigen::Index c = 0; c < d; ++c) {
    PowerSpectrum ps;
    try {
      ps = column_spectrum(weights, c, plan);
    } catch (const std::invalid_argument&) {
      continue;  // silent all-zero column: excluded from the means
    }
    double top = 0.0;
    for (std::uint32_t k = 1; k < ps.p; ++k) top = std::max(top, ps.P[k]);
    double h = 0.0;
    for (double v : ps.P)
      if (v > 0.0) h -= v * std::log(v);
    sum.top1 += top;
    sum.entropy += h / std::log(static_cast<double>(ps.p) / 2.0);
    ++counted;
  }
  if (counted > 0) {
    sum.top1 /= static_cast<double>(counted);
    sum.entropy /= static_cast<double>(counted);
  }
  return sum;
}

std::vector<std::uint32_t> FrequencyTracker::update(
    const std::vector<std::uint32_t>& significant) {
  std::vector<std::uint32_t> fresh;
  for (auto k : significant)
    if (ever_.insert(k).second) fresh.push_back(k);
  return fresh;
}

}  // namespace ordlab
