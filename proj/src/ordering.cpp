#include "ordlab/ordering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ordlab/rng.hpp"

namespace ordlab {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kStride: return "stride";
    case Strategy::kFixedRandom: return "fixed_random";
    case Strategy::kRandom: return "random";
    case Strategy::kTarget: return "target";
  }
  throw std::logic_error("unreachable");
}

Strategy strategy_from_string(const std::string& tag) {
  if (tag == "stride") return Strategy::kStride;
  if (tag == "fixed_random") return Strategy::kFixedRandom;
  if (tag == "random") return Strategy::kRandom;
  if (tag == "target") return Strategy::kTarget;
  throw std::invalid_argument("unknown strategy tag: " + tag);
}

std::uint32_t default_stride(std::uint32_t p) {
  return static_cast<std::uint32_t>(std::floor(std::sqrt(static_cast<double>(p))));
}

void StrideSpec::validate(std::uint32_t p) const {
  if (s < 1 || s >= p) throw std::invalid_argument("stride must satisfy 1 <= s < p");
}

namespace {

std::vector<std::uint32_t> identity_order(std::size_t n) {
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  return order;
}

}  // namespace

PermutationPlan stride_permutation(const std::vector<ExamplePair>& train, std::uint32_t s) {
  if (s < 1) throw std::invalid_argument("stride must be >= 1");
  PermutationPlan plan;
  plan.strategy = Strategy::kStride;
  plan.order = identity_order(train.size());
  std::stable_sort(plan.order.begin(), plan.order.end(),
                   [&](std::uint32_t i, std::uint32_t j) {
                     auto ki = std::make_pair(train[i].a % s, train[i].a);
                     auto kj = std::make_pair(train[j].a % s, train[j].a);
                     return ki < kj;
                   });
  return plan;
}

PermutationPlan target_permutation(const std::vector<ExamplePair>& train) {
  PermutationPlan plan;
  plan.strategy = Strategy::kTarget;
  plan.order = identity_order(train.size());
  std::stable_sort(plan.order.begin(), plan.order.end(),
                   [&](std::uint32_t i, std::uint32_t j) { return train[i].c < train[j].c; });
  return plan;
}

PermutationPlan fixed_random_permutation(std::size_t train_size, std::uint64_t seed) {
  PermutationPlan plan;
  plan.strategy = Strategy::kFixedRandom;
  RngStream rng(seed, "shuffle", /*epoch=*/0);
  plan.order = random_permutation(train_size, rng);
  return plan;
}

PermutationPlan fresh_shuffle(std::size_t train_size, std::uint64_t master_seed,
                              std::uint64_t epoch) {
  PermutationPlan plan;
  plan.strategy = Strategy::kRandom;
  plan.epoch = epoch;
  RngStream rng(master_seed, "shuffle", epoch);
  plan.order = random_permutation(train_size, rng);
  return plan;
}

std::uint32_t predicted_fundamental(std::uint32_t p, std::uint32_t s) {
  if (s < 1 || s >= p) throw std::invalid_argument("stride must satisfy 1 <= s < p");
  // round-half-up of p/s
  return (2 * p + s) / (2 * s);
}

PermutationPlan make_plan(Strategy strategy, const std::vector<ExamplePair>& train,
                          std::uint32_t p, std::uint32_t stride, std::uint64_t master_seed,
                          std::uint64_t epoch, std::uint32_t batch_size) {
  PermutationPlan plan;
  switch (strategy) {
    case Strategy::kStride:
      plan = stride_permutation(train, stride == 0 ? default_stride(p) : stride);
      break;
    case Strategy::kFixedRandom:
      plan = fixed_random_permutation(train.size(), master_seed);
      break;
    case Strategy::kRandom:
      plan = fresh_shuffle(train.size(), master_seed, epoch);
      break;
    case Strategy::kTarget:
      plan = target_permutation(train);
      break;
  }
  plan.epoch = epoch;
  plan.batch_size = batch_size;
  return plan;
}

}  // namespace ordlab
