#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vrloop {

enum class DifficultyBin { Hardest, Hard, Excluded };

// Exact c/n fraction; used for pass@1 estimates so bin boundaries are exact.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;
  std::string source;
  std::optional<DifficultyBin> bin;
  std::optional<Rational> pass1_estimate;

  friend bool operator==(const Problem&, const Problem&) = default;
};

// Throws SchemaError when bin and pass1_estimate disagree.
void validate(const Problem& problem);

struct Attempt {
  int round_index = 0;
  std::string text;
  std::optional<std::string> extracted_answer;
  std::optional<bool> correct;

  friend bool operator==(const Attempt&, const Attempt&) = default;
};

enum class Verdict { Accept, Reject };
enum class VerdictMode { Model, GroundTruth };
enum class FeedbackMode { Model, Generic, None };

struct VerifierOutput {
  Verdict verdict = Verdict::Reject;
  std::string feedback;
  std::optional<double> score;
  std::string raw;
  VerdictMode mode = VerdictMode::Model;

  friend bool operator==(const VerifierOutput&, const VerifierOutput&) = default;
};

inline constexpr std::string_view kGenericFeedbackText = "Your solution appears to be incorrect.";

struct LoopConfig {
  int max_rounds = 20;
  VerdictMode verdict_mode = VerdictMode::Model;
  FeedbackMode feedback_mode = FeedbackMode::Model;
  std::string generic_feedback_text{kGenericFeedbackText};
  std::uint64_t seed_base = 0;

  void validate() const;
};

// Token and latency accounting for one agent call. Simulated agents report
// zero wall time so that traces replay byte-identically.
struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double wall_ms = 0.0;

  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

struct CallUsage {
  std::string role;  // "generator" | "verifier"
  int round = 0;
  TokenUsage tokens;

  friend bool operator==(const CallUsage&, const CallUsage&) = default;
};

// rounds[i] holds attempt y_i and, when it was verified, the verdict of
// verification round i + 1 on it.
struct RoundRecord {
  Attempt attempt;
  std::optional<VerifierOutput> verifier_output;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

enum class Termination { Accepted, MaxRounds, Error };

struct VRTrace {
  std::string problem_id;
  int loop_id = 0;
  std::uint64_t seed = 0;
  int max_rounds = 0;
  VerdictMode verdict_mode = VerdictMode::Model;
  FeedbackMode feedback_mode = FeedbackMode::Model;
  std::vector<RoundRecord> rounds;
  Termination termination = Termination::Error;
  std::vector<CallUsage> usage;
  std::optional<std::string> error;

  int generator_calls() const { return static_cast<int>(rounds.size()); }
  int verifier_calls() const;
  // 1-based verification round that accepted, if any.
  std::optional<int> accepting_round() const;

  friend bool operator==(const VRTrace&, const VRTrace&) = default;
};

std::string_view to_string(DifficultyBin bin);
std::string_view to_string(Verdict verdict);
std::string_view to_string(VerdictMode mode);
std::string_view to_string(FeedbackMode mode);
std::string_view to_string(Termination termination);

// Inverse of to_string; throw SchemaError on unknown names.
DifficultyBin parse_bin(std::string_view name);
Verdict parse_verdict_name(std::string_view name);
VerdictMode parse_verdict_mode(std::string_view name);
FeedbackMode parse_feedback_mode(std::string_view name);
Termination parse_termination(std::string_view name);

}  // namespace vrloop
