#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ordlab {

// splitmix64 finalizer (Steele et al.); used as the mixing function for
// counter-based streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based stream keyed by (master_seed, purpose label, epoch, step).
// Output i is a pure function of (key, i), so streams never interfere and a
// cursor is all the state a snapshot needs.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view label,
            std::uint64_t epoch = 0, std::uint64_t step = 0) {
    std::uint64_t k = splitmix64(master_seed);
    k = splitmix64(k ^ fnv1a64(label));
    k = splitmix64(k ^ epoch);
    key_ = splitmix64(k ^ (step * 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next_u64() { return splitmix64(key_ + counter_++ * 0x9e3779b97f4a7c15ULL); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  std::uint64_t cursor() const { return counter_; }
  void seek(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

inline void fisher_yates(std::span<std::uint32_t> a, RngStream& rng) {
  for (std::size_t i = a.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(a[i - 1], a[j]);
  }
}

inline std::vector<std::uint32_t> random_permutation(std::size_t n, RngStream& rng) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  fisher_yates(order, rng);
  return order;
}

}  // namespace ordlab
