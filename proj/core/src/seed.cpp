#include "vrloop/seed.hpp"

#include <limits>

namespace vrloop {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view problem_id, int loop_id, int round,
                          SeedRole role) {
  std::uint64_t h = mix64(base);
  h = mix64(h ^ fnv1a64(problem_id));
  h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(loop_id)));
  h = mix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(round)) << 8));
  h = mix64(h ^ static_cast<std::uint64_t>(role));
  return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

}  // namespace vrloop
