#pragma once

#include <array>
#include <cstdint>

namespace snapspec {

// SplitMix64, used to expand a single 64-bit seed into generator state and to
// derive independent child seeds (one per spectrum, scene, epoch, ...).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

// Derive a child seed from (root, stream) without consuming generator state.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

// xoshiro256** seeded through SplitMix64. All randomness in the project flows
// through this generator so that results depend only on the root seed and not
// on the standard library's distribution implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (one value per call, the pair's sine half is cached).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace snapspec
