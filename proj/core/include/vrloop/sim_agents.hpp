#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"

namespace vrloop {

// Feedback markers emitted by the simulated verifier. The simulated
// generator keys its refinement uplift off them.
inline constexpr std::string_view kSimInformativeTag = "[sim:informative]";
inline constexpr std::string_view kSimUninformativeTag = "[sim:uninformative]";

enum class RefineDraw {
  // Every attempt flips a fresh coin against its success probability.
  Fresh,
  // The loop's first uniform draw is reused, so a refinement only changes
  // correctness when its success probability crosses that draw.
  Persistent,
};

enum class ScoreMode {
  Constant,    // base_score + drift * round
  Calibrated,  // attempt success probability + drift * round
};

std::string_view to_string(RefineDraw draw);
std::string_view to_string(ScoreMode mode);
RefineDraw parse_refine_draw(std::string_view name);
ScoreMode parse_score_mode(std::string_view name);

struct SimGeneratorParams {
  double solve_prob_hardest = 0.0;
  double solve_prob_hard = 0.1;
  double solve_prob_excluded = 0.5;
  double solve_prob_unbinned = 0.1;
  // Added to the success probability on each refinement, clamped to [0,1].
  double uplift_informative = 0.0;
  double uplift_generic = 0.0;
  RefineDraw refine_draw = RefineDraw::Fresh;

  double base_probability(const Problem& problem) const;
  void validate() const;
};

// Verdict convention: accept a correct attempt with probability tpr and an
// incorrect one with probability fpr. The teacher pair applies in
// reference-conditioned mode.
struct SimVerifierParams {
  double tpr = 0.9;
  double fpr = 0.05;
  double teacher_tpr = 1.0;
  double teacher_fpr = 0.0;
  double informative_feedback_prob = 1.0;
  ScoreMode score_mode = ScoreMode::Constant;
  double base_score = 0.5;
  double score_drift = 0.0;
  bool frozen = true;

  void validate() const;
};

// State the simulated generator writes into its solution text.
struct SimSolutionState {
  double ability = 0.0;  // success probability of this attempt
  double latent = 0.0;   // uniform draw the attempt was decided by
};

std::optional<SimSolutionState> parse_sim_state(std::string_view solution_text);

class SimGenerator final : public GeneratorAgent {
 public:
  SimGenerator(SimGeneratorParams params, PromptSet prompts, ExtractOptions extract = {});

  GeneratorReply generate_initial(const Problem& problem, const CallContext& ctx) override;
  GeneratorReply refine(const Problem& problem, const Attempt& prev, std::string_view feedback,
                        const CallContext& ctx) override;
  std::string identity() const override { return "sim-generator"; }

  const SimGeneratorParams& params() const { return params_; }

 private:
  GeneratorReply emit(const Problem& problem, int round, double ability, double latent, Messages context,
                      std::uint64_t seed) const;

  SimGeneratorParams params_;
  PromptSet prompts_;
  ExtractOptions extract_;
};

class SimVerifier final : public VerifierAgent {
 public:
  SimVerifier(SimVerifierParams params, PromptSet prompts, std::string name = "sim-verifier");

  VerifierReply verify(const Problem& problem, const Attempt& attempt, VerifyMode mode,
                       const CallContext& ctx) override;
  std::string identity() const override { return name_; }
  bool frozen() const override { return params_.frozen; }

  const SimVerifierParams& params() const { return params_; }

 private:
  SimVerifierParams params_;
  PromptSet prompts_;
  std::string name_;
};

// Returns fixed hand-set distributions regardless of the messages.
class FixtureLogprobBackend final : public LogprobBackend {
 public:
  // `completion` is what complete_with_logprobs returns; `scores` (same
  // length as any forced sequence) is what score_along returns.
  FixtureLogprobBackend(std::vector<TokenDist> completion, std::vector<TokenDist> scores,
                        std::string name = "fixture");

  Completion complete_with_logprobs(const Messages& messages, const SamplingParams& params) override;
  std::vector<TokenDist> score_along(const Messages& messages, std::span<const std::string> forced_tokens,
                                     int top_k) override;
  std::string scoring_mechanism() const override { return "fixture"; }
  std::string identity() const override { return name_; }

 private:
  std::vector<TokenDist> completion_;
  std::vector<TokenDist> scores_;
  std::string name_;
};

struct SeededLogprobParams {
  int vocab_size = 24;
  int response_tokens = 12;  // including the trailing verdict tokens
  std::uint64_t salt = 0;
};

// Pseudo-model whose next-token distribution is a pure function of the
// messages and the token prefix. Responses end with a verdict line so they
// parse like real verifier replies.
class SeededLogprobBackend final : public LogprobBackend {
 public:
  explicit SeededLogprobBackend(SeededLogprobParams params = {}, std::string name = "seeded");

  Completion complete_with_logprobs(const Messages& messages, const SamplingParams& params) override;
  std::vector<TokenDist> score_along(const Messages& messages, std::span<const std::string> forced_tokens,
                                     int top_k) override;
  std::string scoring_mechanism() const override { return "seeded"; }
  std::string identity() const override { return name_; }

 private:
  // Full (untruncated) distribution at `position` over the vocabulary.
  std::vector<double> full_distribution(std::uint64_t context_hash, int position) const;
  TokenDist truncate(const std::vector<double>& probs, int position, std::size_t chosen, int top_k) const;
  std::size_t token_index(std::string_view token) const;

  SeededLogprobParams params_;
  std::string name_;
  std::vector<std::string> vocab_;
};

}  // namespace vrloop
