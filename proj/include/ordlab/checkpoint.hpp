#pragma once

#include <cstdint>
#include <filesystem>
#include <set>

#include "ordlab/metrics.hpp"
#include "ordlab/optim.hpp"
#include "ordlab/param_vector.hpp"

namespace ordlab {

// Everything a hook carries across epochs. Checkpointed so a resumed run's
// metric streams continue byte-identically.
struct HookState {
  bool has_prev_grad = false;
  ParameterVector prev_grad;  // previous epoch's mean gradient (consecutive hook)

  bool path_initialized = false;
  ParameterVector path_origin, path_prev;
  double path_length = 0.0;

  bool has_prev_theta = false;
  ParameterVector prev_theta;  // epoch-start parameters (parameter_delta, projection)

  GradientWindow window{50};

  std::set<std::uint32_t> embed_ever, decoder_ever;  // fourier trackers

  bool has_prev_e = false;
  ParameterVector prev_e;  // last entanglement vector (coherence across bursts)
};

struct CheckpointData {
  std::uint64_t epoch = 0;  // epochs completed when the checkpoint was taken
  ParameterVector theta;
  AdamW::State opt;
  HookState hooks;
};

// Single binary file, little-endian, FNV-1a checksum trailer. Loading verifies
// the checksum and the parameter count against the registry.
void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path);
CheckpointData load_checkpoint(const std::filesystem::path& path, const RegistryPtr& reg);

// Parameters only (reference models don't need optimizer or hook state).
ParameterVector load_checkpoint_params(const std::filesystem::path& path,
                                       const RegistryPtr& reg);

}  // namespace ordlab
