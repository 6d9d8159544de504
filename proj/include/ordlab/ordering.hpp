#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ordlab/task_data.hpp"

namespace ordlab {

enum class Strategy { kStride, kFixedRandom, kRandom, kTarget };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& tag);

// An epoch's example ordering plus its batch partition: batches are
// consecutive slices of `order`, the final partial batch is kept.
struct PermutationPlan {
  std::vector<std::uint32_t> order;
  std::uint32_t batch_size = 0;
  std::uint64_t epoch = 0;
  Strategy strategy = Strategy::kRandom;

  std::size_t batch_count() const {
    return (order.size() + batch_size - 1) / batch_size;
  }
  // [begin, end) into `order` for batch i.
  std::pair<std::size_t, std::size_t> batch_range(std::size_t i) const {
    std::size_t begin = i * batch_size;
    std::size_t end = std::min(order.size(), begin + batch_size);
    return {begin, end};
  }
};

struct StrideSpec {
  std::uint32_t s = 0;  // default floor(sqrt(p)) when 0
  void validate(std::uint32_t p) const;
};

std::uint32_t default_stride(std::uint32_t p);  // floor(sqrt(p))

// Indices stably sorted by (a mod s, a); identical across epochs.
PermutationPlan stride_permutation(const std::vector<ExamplePair>& train, std::uint32_t s);

// Indices stably sorted by label (a + b) mod p; identical across epochs.
PermutationPlan target_permutation(const std::vector<ExamplePair>& train);

// Seeded uniform permutation computed once and reused verbatim every epoch.
PermutationPlan fixed_random_permutation(std::size_t train_size, std::uint64_t seed);

// Pure function of (master_seed, epoch): fresh shuffle per epoch.
PermutationPlan fresh_shuffle(std::size_t train_size, std::uint64_t master_seed,
                              std::uint64_t epoch);

// F = round-half-up of p / s, the Fourier dual of the stride.
std::uint32_t predicted_fundamental(std::uint32_t p, std::uint32_t s);

// Plan for `strategy` at `epoch`; the only epoch-dependent strategy is Random.
PermutationPlan make_plan(Strategy strategy, const std::vector<ExamplePair>& train,
                          std::uint32_t p, std::uint32_t stride, std::uint64_t master_seed,
                          std::uint64_t epoch, std::uint32_t batch_size);

}  // namespace ordlab
