#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ordlab {

struct TaskSpec {
  std::uint32_t p = 0;           // prime modulus
  std::uint64_t train_size = 0;
  std::uint64_t test_size = 0;
  std::uint64_t data_seed = 0;

  void validate() const;
};

struct ExamplePair {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t c = 0;  // (a + b) mod p

  bool operator==(const ExamplePair&) const = default;
};

struct Dataset {
  TaskSpec spec;
  std::vector<ExamplePair> train;
  std::vector<ExamplePair> test;
};

bool is_prime(std::uint64_t n);

// f(a, b) = (a + b) mod p. Throws std::invalid_argument on out-of-range operands.
std::uint32_t label(std::uint32_t a, std::uint32_t b, std::uint32_t p);

// Seeded partial Fisher-Yates over pair indices a*p+b: train takes the first
// train_size draws, test the next test_size, so the sets are disjoint and
// fully determined by data_seed.
Dataset generate_dataset(const TaskSpec& spec);

// Header (p, sizes, seed) + packed (a, b) index list. Loading re-derives and
// verifies every label.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace ordlab
