#include "vrloop/types.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "vrloop/errors.hpp"

namespace vrloop {

namespace {

template <typename Enum, std::size_t N>
Enum lookup(const std::array<std::pair<std::string_view, Enum>, N>& table, std::string_view name,
            std::string_view what) {
  for (const auto& [key, value] : table) {
    if (key == name) return value;
  }
  throw SchemaError("unknown " + std::string(what) + " '" + std::string(name) + "'");
}

constexpr std::array<std::pair<std::string_view, DifficultyBin>, 3> kBins{{
    {"hardest", DifficultyBin::Hardest},
    {"hard", DifficultyBin::Hard},
    {"excluded", DifficultyBin::Excluded},
}};
constexpr std::array<std::pair<std::string_view, Verdict>, 2> kVerdicts{{
    {"accept", Verdict::Accept},
    {"reject", Verdict::Reject},
}};
constexpr std::array<std::pair<std::string_view, VerdictMode>, 2> kVerdictModes{{
    {"model", VerdictMode::Model},
    {"ground_truth", VerdictMode::GroundTruth},
}};
constexpr std::array<std::pair<std::string_view, FeedbackMode>, 3> kFeedbackModes{{
    {"model", FeedbackMode::Model},
    {"generic", FeedbackMode::Generic},
    {"none", FeedbackMode::None},
}};
constexpr std::array<std::pair<std::string_view, Termination>, 3> kTerminations{{
    {"accepted", Termination::Accepted},
    {"max_rounds", Termination::MaxRounds},
    {"error", Termination::Error},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<std::string_view, Enum>, N>& table, Enum value) {
  for (const auto& [key, v] : table) {
    if (v == value) return key;
  }
  return "unknown";
}

}  // namespace

void validate(const Problem& problem) {
  if (problem.id.empty()) throw SchemaError("problem id must be non-empty");
  if (problem.pass1_estimate) {
    const auto& est = *problem.pass1_estimate;
    if (est.den <= 0 || est.num < 0 || est.num > est.den) {
      throw SchemaError("problem " + problem.id + ": pass1_estimate outside [0,1]");
    }
  }
  if (!problem.bin) return;
  if (*problem.bin == DifficultyBin::Hardest) {
    if (!problem.pass1_estimate || problem.pass1_estimate->num != 0) {
      throw SchemaError("problem " + problem.id + ": bin hardest requires pass1_estimate = 0");
    }
  } else if (*problem.bin == DifficultyBin::Hard) {
    const auto& est = problem.pass1_estimate;
    // 0 < c/n < 1/5  <=>  c > 0 and 5c < n
    if (!est || est->num <= 0 || 5 * est->num >= est->den) {
      throw SchemaError("problem " + problem.id + ": bin hard requires 0 < pass1_estimate < 0.2");
    }
  }
}

void LoopConfig::validate() const {
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
}

int VRTrace::verifier_calls() const {
  return static_cast<int>(std::count_if(rounds.begin(), rounds.end(),
                                        [](const RoundRecord& r) { return r.verifier_output.has_value(); }));
}

std::optional<int> VRTrace::accepting_round() const {
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    const auto& out = rounds[i].verifier_output;
    if (out && out->verdict == Verdict::Accept) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

std::string_view to_string(DifficultyBin bin) { return name_of(kBins, bin); }
std::string_view to_string(Verdict verdict) { return name_of(kVerdicts, verdict); }
std::string_view to_string(VerdictMode mode) { return name_of(kVerdictModes, mode); }
std::string_view to_string(FeedbackMode mode) { return name_of(kFeedbackModes, mode); }
std::string_view to_string(Termination termination) { return name_of(kTerminations, termination); }

DifficultyBin parse_bin(std::string_view name) { return lookup(kBins, name, "bin"); }
Verdict parse_verdict_name(std::string_view name) { return lookup(kVerdicts, name, "verdict"); }
VerdictMode parse_verdict_mode(std::string_view name) { return lookup(kVerdictModes, name, "verdict mode"); }
FeedbackMode parse_feedback_mode(std::string_view name) {
  return lookup(kFeedbackModes, name, "feedback mode");
}
Termination parse_termination(std::string_view name) {
  return lookup(kTerminations, name, "termination");
}

}  // namespace vrloop
