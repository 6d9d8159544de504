#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ordlab/param_vector.hpp"
#include "ordlab/task_data.hpp"

namespace ordlab {

enum class Precision { kF32, kF64 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

struct ModelConfig {
  std::uint32_t p = 0;       // vocab and output size
  int d_model = 256;
  int n_heads = 4;
  int d_ff = 2048;
  int n_layers = 2;
  double dropout_rate = 0.1;
  Precision precision = Precision::kF64;

  void validate() const;
};

struct ForwardMode {
  bool train = false;  // dropout active only in train mode
  std::uint64_t master_seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;

  static ForwardMode eval() { return {}; }
  static ForwardMode train_at(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step) {
    return {true, seed, epoch, step};
  }
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& where)
      : std::runtime_error("non-finite value in " + where), layer(where) {}
  std::string layer;
};

// Pre-LayerNorm transformer encoder over the 2-token operand sequence, with
// hand-derived backprop. Forward/backward are pure given an explicit RNG
// stream; all reductions run in a fixed order.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const RegistryPtr& registry() const { return reg_; }

  // Deterministic init: uniform fan-in for linear/embedding weights, ones and
  // zeros for layer norms. Draw order follows the segment registry.
  ParameterVector init_params(std::uint64_t init_seed) const;

  // Row e = logits over classes for example e. Eval-mode path used by tests.
  Eigen::MatrixXd logits(const ParameterVector& params,
                         std::span<const ExamplePair> batch) const;

  double loss(const ParameterVector& params, std::span<const ExamplePair> batch,
              const ForwardMode& mode) const;

  // Mean cross-entropy over the batch and its exact gradient. Dropout masks
  // are fixed by the step's named RNG stream so the gradient matches the
  // sampled forward.
  std::pair<double, ParameterVector> loss_and_grad(const ParameterVector& params,
                                                   std::span<const ExamplePair> batch,
                                                   const ForwardMode& mode) const;

  // Argmax-match fraction; ties break to the lowest class index.
  double accuracy(const ParameterVector& params, std::span<const ExamplePair> examples) const;

 private:
  ModelConfig cfg_;
  RegistryPtr reg_;
};

RegistryPtr make_registry(const ModelConfig& cfg);

}  // namespace ordlab
