#include "vrloop/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "vrloop/errors.hpp"

namespace vrloop {

namespace {

void check_sizes(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error("divergence: distributions have different support sizes");
}

// Mass per support token for one side.
std::vector<double> side_masses(const TokenDist& d, const std::vector<std::string>& support) {
  std::map<std::string_view, double> listed;
  double min_listed = std::numeric_limits<double>::infinity();
  for (const auto& alt : d.alternatives) {
    const double pr = std::exp(alt.logprob);
    listed[alt.token] += pr;
  }
  for (const auto& [tok, pr] : listed) min_listed = std::min(min_listed, pr);

  const std::size_t n_tokens = support.size() - 1;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    if (listed.find(support[i]) == listed.end()) ++missing;
  }
  const double tail = std::max(d.tail_mass, 0.0);
  double share = missing > 0 ? tail / static_cast<double>(missing + 1) : 0.0;
  if (std::isfinite(min_listed)) share = std::min(share, min_listed);

  std::vector<double> m(support.size(), 0.0);
  double used = 0.0;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const auto it = listed.find(support[i]);
    if (it != listed.end()) {
      m[i] = it->second;
    } else {
      m[i] = share;
      used += share;
    }
  }
  m.back() = std::max(tail - used, 0.0);

  double total = 0.0;
  for (auto& x : m) {
    x = std::max(x, kProbabilityFloor);
    total += x;
  }
  for (auto& x : m) x /= total;
  return m;
}

}  // namespace

AlignedPair align_distributions(const TokenDist& p, const TokenDist& q) {
  AlignedPair out;
  for (const auto* d : {&p, &q}) {
    for (const auto& alt : d->alternatives) {
      if (std::find(out.support.begin(), out.support.end(), alt.token) == out.support.end()) {
        out.support.push_back(alt.token);
      }
    }
  }
  out.support.emplace_back(kTailToken);
  out.p = side_masses(p, out.support);
  out.q = side_masses(q, out.support);
  return out;
}

double alpha_divergence(std::span<const double> p, std::span<const double> q, double alpha) {
  check_sizes(p, q);
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  double overlap = 0.0;
  if (alpha == 0.5) {
    for (std::size_t i = 0; i < p.size(); ++i) overlap += std::sqrt(p[i] * q[i]);
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) overlap += std::pow(p[i], alpha) * std::pow(q[i], 1.0 - alpha);
  }
  return std::max(0.0, (1.0 - overlap) / (alpha * (1.0 - alpha)));
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  check_sizes(p, q);
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

std::string_view to_string(DivergenceKind kind) {
  return kind == DivergenceKind::AlphaFamily ? "alpha_family" : "jensen_shannon";
}

DivergenceKind parse_divergence_kind(std::string_view name) {
  if (name == "alpha_family") return DivergenceKind::AlphaFamily;
  if (name == "jensen_shannon") return DivergenceKind::JensenShannon;
  throw ConfigError("unknown divergence_kind '" + std::string(name) + "'");
}

double divergence(DivergenceKind kind, std::span<const double> p, std::span<const double> q, double alpha) {
  return kind == DivergenceKind::AlphaFamily ? alpha_divergence(p, q, alpha) : jensen_shannon(p, q);
}

}  // namespace vrloop
