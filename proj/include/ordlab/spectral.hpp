#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "ordlab/param_vector.hpp"

namespace ordlab {

// Two-sided normalized power spectrum over Z_p; DC at index 0.
struct PowerSpectrum {
  std::uint32_t p = 0;
  std::vector<double> P;  // length p, nonnegative, sums to 1
};

// Precomputed twiddle table for exact DFTs over Z_p: cos/sin of 2*pi*m/p,
// indexed by (k*j) mod p. O(p) memory, O(p^2) per transformed column.
class DftPlan {
 public:
  explicit DftPlan(std::uint32_t p);
  std::uint32_t p() const { return p_; }

  // |X_k|^2 for one real length-p signal, accumulated into `power` (length p).
  void accumulate_power(const double* signal, double* power) const;

 private:
  std::uint32_t p_;
  std::vector<double> cos_, sin_;
};

// DFT each column of a p x d matrix along the length-p axis; P_k = sum_d
// |X_{k,d}|^2, normalized to sum 1. Throws on an all-zero matrix.
PowerSpectrum weight_spectrum(const Eigen::Ref<const MatrixRM>& weights, const DftPlan& plan);

// Spectrum of a single column (a "neuron" over Z_p).
PowerSpectrum column_spectrum(const Eigen::Ref<const MatrixRM>& weights, Eigen::Index col,
                              const DftPlan& plan);

// S = (-sum P_k log P_k) / log p, with 0 log 0 := 0. In [0, 1].
double spectral_entropy(const PowerSpectrum& ps);

// argmax over k in [1, p/2); ties break to the lowest k.
std::uint32_t peak_frequency(const PowerSpectrum& ps);

// { k in [1, p/2) : P_k > 10/p }
std::vector<std::uint32_t> significant_frequencies(const PowerSpectrum& ps);

// Doubling harmonics of F with Nyquist folding: record p - (f mod p) whenever
// f mod p exceeds p/2. First term is F itself.
std::vector<std::uint32_t> harmonic_series(std::uint32_t F, std::uint32_t p,
                                           std::size_t count);

// low_freq_power = sum_{k < c} P_k with c = max(p/20, 10);
// stride_harmonic_power = sum_{k=1..9} P_{k*floor(sqrt(p))} (in-range terms).
double low_freq_power(const PowerSpectrum& ps);
double stride_harmonic_power(const PowerSpectrum& ps);

struct NeuronSpectralSummary {
  double top1 = 0.0;     // mean_n max_{k>=1} P_k^(n)
  double entropy = 0.0;  // mean_n H(P^(n)) / log(p/2)
};
NeuronSpectralSummary neuron_spectral_summary(const Eigen::Ref<const MatrixRM>& weights,
                                              const DftPlan& plan);

// Per-run frequency bookkeeping: the ever-significant set and newly acquired
// frequencies per emission (fourier hook state).
class FrequencyTracker {
 public:
  // returns the frequencies that crossed the threshold for the first time
  std::vector<std::uint32_t> update(const std::vector<std::uint32_t>& significant);
  const std::set<std::uint32_t>& ever_significant() const { return ever_; }
  void restore(std::set<std::uint32_t> ever) { ever_ = std::move(ever); }

 private:
  std::set<std::uint32_t> ever_;
};

}  // namespace ordlab
