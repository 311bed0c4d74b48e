#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrloop/agents.hpp"

namespace vrloop {

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr std::string_view kTailToken = "<tail>";

// Two truncated distributions over a shared support: the union of listed
// tokens followed by one tail atom (support.back() == kTailToken).
struct AlignedPair {
  std::vector<std::string> support;
  std::vector<double> p;
  std::vector<double> q;
};

// A token listed by only one side receives, on the other side, an equal
// share of that side's tail mass (never more than that side's smallest
// listed probability); the remainder stays on the tail atom. Every atom is
// then floored at kProbabilityFloor and each side renormalized.
AlignedPair align_distributions(const TokenDist& p, const TokenDist& q);

// (1 / (alpha (1 - alpha))) (1 - sum p^alpha q^(1-alpha)), alpha in (0,1).
// At alpha = 0.5 this is 4 (1 - sum sqrt(p q)).
double alpha_divergence(std::span<const double> p, std::span<const double> q, double alpha);

// 0.5 KL(p || m) + 0.5 KL(q || m), m = (p + q) / 2, natural log. In [0, ln 2].
double jensen_shannon(std::span<const double> p, std::span<const double> q);

enum class DivergenceKind { AlphaFamily, JensenShannon };

std::string_view to_string(DivergenceKind kind);
DivergenceKind parse_divergence_kind(std::string_view name);

double divergence(DivergenceKind kind, std::span<const double> p, std::span<const double> q, double alpha);

}  // namespace vrloop
