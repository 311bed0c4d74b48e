#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

// Per-call coordinates handed to an agent. `round` is the attempt index for
// generator calls and the 1-based verification round for verifier calls.
struct CallContext {
  std::uint64_t seed = 0;
  int round = 0;
};

struct GeneratorReply {
  Attempt attempt;  // `correct` is left unset; the caller grades it
  Messages context;
  TokenUsage usage;
};

struct VerifierReply {
  VerifierOutput output;
  Messages context;
  TokenUsage usage;
};

enum class VerifyMode { Plain, ReferenceConditioned };

class GeneratorAgent {
 public:
  virtual ~GeneratorAgent() = default;
  virtual GeneratorReply generate_initial(const Problem& problem, const CallContext& ctx) = 0;
  virtual GeneratorReply refine(const Problem& problem, const Attempt& prev, std::string_view feedback,
                                const CallContext& ctx) = 0;
  virtual std::string identity() const = 0;
};

class VerifierAgent {
 public:
  virtual ~VerifierAgent() = default;
  virtual VerifierReply verify(const Problem& problem, const Attempt& attempt, VerifyMode mode,
                               const CallContext& ctx) = 0;
  virtual std::string identity() const = 0;
  // Verifiers used inside generator-training episodes must be frozen.
  virtual bool frozen() const = 0;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

// One generated position of a top-K truncated distribution. Listed
// probabilities plus tail_mass sum to one.
struct TokenDist {
  int position = 0;
  std::string chosen_token;
  double chosen_logprob = 0.0;
  std::vector<TokenLogprob> alternatives;
  double tail_mass = 0.0;

  // Builds a distribution from endpoint logprobs. Listed mass above one
  // (rounding in the endpoint) is renormalized away.
  static TokenDist from_logprobs(int position, std::string chosen_token, double chosen_logprob,
                                 std::vector<TokenLogprob> alternatives);

  double listed_mass() const;
  // Throws SchemaError when the mass or sign invariants fail (tolerance 1e-9).
  void validate() const;

  friend bool operator==(const TokenDist&, const TokenDist&) = default;
};

struct Completion {
  std::string text;
  std::vector<TokenDist> tokens;
  TokenUsage usage;
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 1024;
  int top_logprobs = 5;
  std::uint64_t seed = 0;
};

// A model that returns per-token truncated distributions and can score a
// forced continuation (teacher scoring along student tokens).
class LogprobBackend {
 public:
  virtual ~LogprobBackend() = default;
  virtual Completion complete_with_logprobs(const Messages& messages, const SamplingParams& params) = 0;
  // Distribution at each position i of `forced_tokens`, conditioned on the
  // messages plus forced_tokens[0..i). chosen_token is forced_tokens[i].
  virtual std::vector<TokenDist> score_along(const Messages& messages, std::span<const std::string> forced_tokens,
                                             int top_k) = 0;
  // "fixture", "seeded", "echo" or "continuation"; recorded in run metadata.
  virtual std::string scoring_mechanism() const = 0;
  virtual std::string identity() const = 0;
  // Throws CapabilityError if logprobs are unavailable.
  virtual void probe() {}
};

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 4096;
  int top_logprobs = 5;
  double timeout_s = 300.0;
  int max_retries = 4;
  std::vector<int> backoff_ms{500, 1000, 2000, 4000, 8000};
  int max_in_flight = 16;
  bool frozen = true;

  void validate() const;
};

}  // namespace vrloop
