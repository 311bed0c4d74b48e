#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

// Unbiased pass@k: 1 - C(n-c, k) / C(n, k).
double pass_at_k(int n, int c, int k);

// Mean over traces of round_series(trace)[r].
double round_pass1(std::span<const VRTrace> traces, int r);

// Groups traces by problem, applies pass_at_k per problem at round r and
// averages over problems. Every problem must carry the same loop count.
double pass_at_k_per_round(std::span<const VRTrace> traces, int r, int k);

struct FrontierPoint {
  int round = 0;
  double coverage = 0.0;
  std::optional<double> precision;  // absent when nothing was accepted
  std::size_t accepted = 0;
  std::size_t accepted_correct = 0;
  std::size_t total = 0;
};

// One point per t = 1..max_rounds.
std::vector<FrontierPoint> precision_coverage(std::span<const VRTrace> traces, int max_rounds);

struct ScoreAccuracyPoint {
  int round = 0;
  std::optional<double> mean_score;
  std::size_t scored = 0;
  double pass1 = 0.0;
};

struct ScoreAccuracySeries {
  std::string score_source;
  std::vector<ScoreAccuracyPoint> points;  // rounds 1..max_rounds
  std::vector<std::string> excluded;       // "<problem>#<loop>" without any score
};

// Mean verifier score of verification round r (over loops that reached it)
// paired with round_pass1 at r. Throws when no trace carries a score.
ScoreAccuracySeries score_accuracy_series(std::span<const VRTrace> traces, int max_rounds,
                                          std::string score_source = "self_reported");

struct BonSample {
  Attempt attempt;
  std::optional<VerifierOutput> verdict;
  TokenUsage generator_usage;
  TokenUsage verifier_usage;
};

// N independent round-0 samples, each judged once. Sample i shares its
// generator seed with attempt y_i of the V-R loop with the same
// coordinates, and its verifier seed with verification round i + 1.
struct BonRun {
  std::string problem_id;
  int loop_id = 0;
  std::uint64_t seed = 0;
  int requested = 0;
  std::vector<BonSample> samples;  // only the samples that completed
  std::vector<std::string> errors;

  bool degraded() const { return static_cast<int>(samples.size()) < requested; }
  friend bool operator==(const BonRun&, const BonRun&) = default;
};

struct BonSelection {
  int index = -1;
  bool accepted = false;  // false: uniform fallback over all samples
  bool correct = false;
};

inline bool operator==(const BonSample& a, const BonSample& b) {
  return a.attempt == b.attempt && a.verdict == b.verdict && a.generator_usage == b.generator_usage &&
         a.verifier_usage == b.verifier_usage;
}

BonRun run_bon(const Problem& problem, GeneratorAgent& generator, VerifierAgent& verifier, int n, int loop_id,
               std::uint64_t seed, const AnswerChecker& checker = default_answer_checker());

// Best-of-n over the first n completed samples: uniform among accepted,
// else uniform among all. The draw is seeded by (seed, problem, loop, n).
BonSelection bon_select(const BonRun& run, int n);

struct MatchedComputeRow {
  int rounds = 0;  // r
  int n = 0;       // N = r + 1
  std::size_t loops = 0;
  double vr_pass1 = 0.0;
  double bon_pass1 = 0.0;
  double vr_se = 0.0;
  double bon_se = 0.0;
  std::int64_t vr_generator_budget = 0;   // (r + 1) per loop
  std::int64_t bon_generator_calls = 0;   // N per loop
  std::int64_t vr_generator_calls = 0;    // actually made (early accepts stop short)
  std::int64_t vr_verifier_calls = 0;
  std::int64_t bon_verifier_calls = 0;
};

// Throws when a budget exceeds either arm or the arms cover different loops.
std::vector<MatchedComputeRow> matched_compute_compare(std::span<const VRTrace> vr, std::span<const BonRun> bon,
                                                       std::span<const int> budgets);

void write_round_series_csv(std::ostream& out, std::span<const VRTrace> traces, int max_rounds,
                            std::span<const int> ks = {});
void write_frontier_csv(std::ostream& out, std::span<const FrontierPoint> points);
void write_score_accuracy_csv(std::ostream& out, const ScoreAccuracySeries& series);
void write_matched_compute_csv(std::ostream& out, std::span<const MatchedComputeRow> rows);

inline constexpr int kBonSchemaVersion = 1;
nlohmann::json bon_to_json(const BonRun& run);
BonRun bon_from_json(const nlohmann::json& j);

}  // namespace vrloop
