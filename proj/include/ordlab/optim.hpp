#pragma once

#include <cstdint>

#include "ordlab/param_vector.hpp"

namespace ordlab {

struct ScheduleSpec {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::uint64_t total_epochs = 5000;  // cosine period; independent of the stop budget
};

// lr(e) = lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi e / total)); clamps past the
// end of the period.
double cosine_lr(const ScheduleSpec& sched, std::uint64_t epoch);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with decoupled decay: the decay term theta -= lr * wd * theta is
// applied separately from the adaptive step and never enters m/v.
class AdamW {
 public:
  AdamW(RegistryPtr reg, AdamWConfig cfg);

  // One update of theta in place at learning rate lr; increments t.
  void step(ParameterVector& theta, const ParameterVector& grad, double lr);

  const AdamWConfig& config() const { return cfg_; }
  std::uint64_t t() const { return t_; }
  const ParameterVector& m() const { return m_; }
  const ParameterVector& v() const { return v_; }

  // Full optimizer state for snapshot/restore and checkpoints.
  struct State {
    ParameterVector m, v;
    std::uint64_t t = 0;
  };
  State state() const { return {m_, v_, t_}; }
  void restore(const State& s);

 private:
  AdamWConfig cfg_;
  ParameterVector m_, v_;
  std::uint64_t t_ = 0;
};

// Everything needed to roll training back to an exact point: parameters plus
// optimizer moments. RNG streams are stateless, so no generator state is kept.
struct TrainingSnapshot {
  ParameterVector theta;
  AdamW::State opt;
  std::uint64_t epoch = 0;
};

TrainingSnapshot take_snapshot(const ParameterVector& theta, const AdamW& opt,
                               std::uint64_t epoch);
void restore_snapshot(const TrainingSnapshot& snap, ParameterVector& theta, AdamW& opt);

}  // namespace ordlab
