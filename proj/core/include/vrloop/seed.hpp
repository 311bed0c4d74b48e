#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vrloop {

enum class SeedRole : std::uint8_t {
  Generator = 1,
  Verifier = 2,
  Teacher = 3,
  Student = 4,
  Rollout = 5,
  BonSelect = 6,
};

// Per-call seeds are a pure function of their coordinates, so the order in
// which concurrent loops are scheduled cannot change any sampled value.
std::uint64_t derive_seed(std::uint64_t base, std::string_view problem_id, int loop_id, int round,
                          SeedRole role);

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Thin wrapper over mt19937_64 with platform-independent conversions
// (std distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n); n >= 1.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vrloop
