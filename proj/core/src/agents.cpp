#include "vrloop/agents.hpp"

#include <cmath>

#include "vrloop/errors.hpp"

namespace vrloop {

TokenDist TokenDist::from_logprobs(int position, std::string chosen_token, double chosen_logprob,
                                   std::vector<TokenLogprob> alternatives) {
  TokenDist dist;
  dist.position = position;
  dist.chosen_token = std::move(chosen_token);
  dist.chosen_logprob = std::min(chosen_logprob, 0.0);
  dist.alternatives = std::move(alternatives);
  for (auto& alt : dist.alternatives) alt.logprob = std::min(alt.logprob, 0.0);
  const double listed = dist.listed_mass();
  if (listed > 1.0) {
    const double shift = std::log(listed);
    for (auto& alt : dist.alternatives) alt.logprob -= shift;
    dist.tail_mass = 0.0;
  } else {
    dist.tail_mass = 1.0 - listed;
  }
  return dist;
}

double TokenDist::listed_mass() const {
  double sum = 0.0;
  for (const auto& alt : alternatives) sum += std::exp(alt.logprob);
  return sum;
}

void TokenDist::validate() const {
  if (!(chosen_logprob <= 0.0)) throw SchemaError("token dist: chosen logprob must be <= 0");
  for (const auto& alt : alternatives) {
    if (!(alt.logprob <= 0.0)) throw SchemaError("token dist: logprob must be <= 0");
  }
  if (tail_mass < -1e-9 || tail_mass > 1.0 + 1e-9) throw SchemaError("token dist: tail mass outside [0,1]");
  if (std::fabs(listed_mass() + tail_mass - 1.0) > 1e-9) {
    throw SchemaError("token dist at position " + std::to_string(position) + ": mass does not sum to 1");
  }
}

void EndpointConfig::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint base_url is required");
  if (model.empty()) throw ConfigError("endpoint model is required");
  if (top_logprobs < 1) throw ConfigError("endpoint top_logprobs must be >= 1");
  if (max_retries < 0) throw ConfigError("endpoint max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("endpoint max_in_flight must be >= 1");
  if (timeout_s <= 0) throw ConfigError("endpoint timeout_s must be > 0");
}

}  // namespace vrloop
