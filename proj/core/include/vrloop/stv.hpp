#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/divergence.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

struct StvConfig {
  double alpha = 0.5;
  DivergenceKind divergence_kind = DivergenceKind::JensenShannon;
  double lambda = 1.0;
  int samples_per_pair = 1;

  void validate() const;
};

// A (problem, attempt) pair drawn from generator rollouts; the attempt is
// the solution the verifier is asked to judge.
struct OpdPair {
  Problem problem;
  Attempt attempt;
  std::string attempt_ref;  // "<problem>/<loop>/<round>" or similar
};

struct OpdPosition {
  TokenDist student;
  TokenDist teacher;
  std::vector<std::string> support;
  std::vector<double> student_aligned;
  std::vector<double> teacher_aligned;
  double divergence = 0.0;

  friend bool operator==(const OpdPosition&, const OpdPosition&) = default;
};

struct OPDRecord {
  std::string problem_id;
  std::string attempt_ref;
  int sample_index = 0;
  std::string sampled_by = "student";  // provenance: prefixes always come from the student
  std::string student_text;
  std::vector<std::string> student_tokens;
  std::vector<OpdPosition> positions;
  double mean_divergence = 0.0;
  DivergenceKind divergence_kind = DivergenceKind::JensenShannon;
  double alpha = 0.5;
  std::string teacher_scoring;  // mechanism used to score teacher tokens
  Verdict student_verdict = Verdict::Reject;
  std::optional<bool> attempt_correct;

  friend bool operator==(const OPDRecord&, const OPDRecord&) = default;
};

struct OpdAuditEntry {
  std::string attempt_ref;
  int sample_index = 0;
  std::string reason;
};

// Samples verifier responses from the student (plain prompt), scores the
// same tokens under the teacher (reference-conditioned prompt), aligns the
// truncated distributions position by position and averages the per-token
// divergence. Transport failures and malformed distributions skip the sample
// and add an audit entry.
std::vector<OPDRecord> build_opd_records(LogprobBackend& student, LogprobBackend& teacher, const PromptSet& prompts,
                                         std::span<const OpdPair> pairs, const StvConfig& config,
                                         const SamplingParams& sampling, std::uint64_t seed,
                                         std::vector<OpdAuditEntry>* audit = nullptr);

// Per-position divergences and their mean for one student/teacher sequence.
std::vector<OpdPosition> score_positions(std::span<const TokenDist> student, std::span<const TokenDist> teacher,
                                         const StvConfig& config);

// 1 iff (accept and correct) or (reject and incorrect).
int verdict_reward(Verdict verdict, bool attempt_correct);

struct VerdictRecord {
  std::string problem_id;
  std::string attempt_ref;
  Messages prompt;
  Verdict verdict = Verdict::Reject;
  bool attempt_correct = false;
  int reward = 0;

  friend bool operator==(const VerdictRecord&, const VerdictRecord&) = default;
};

// One verdict-reward record per OPD sample, judged on the student's own
// sampled verdict. Records without a known attempt correctness are skipped.
std::vector<VerdictRecord> verdict_records_from(std::span<const OPDRecord> records, std::span<const OpdPair> pairs,
                                                const PromptSet& prompts);

// Loss convention: L_RL = -mean reward, total = L_OPD + lambda * L_RL.
struct StvLossReport {
  double opd_loss = 0.0;
  double rl_loss = 0.0;
  double mean_reward = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  std::size_t opd_records = 0;
  std::size_t verdict_records = 0;
};

StvLossReport stv_loss_report(std::span<const OPDRecord> opd, std::span<const VerdictRecord> verdicts,
                              double lambda);

inline constexpr int kOpdSchemaVersion = 1;
inline constexpr int kVerdictSchemaVersion = 1;

void export_opd_dataset(std::span<const OPDRecord> records, const std::filesystem::path& path);
std::vector<OPDRecord> import_opd_dataset(const std::filesystem::path& path);
void export_verdict_dataset(std::span<const VerdictRecord> records, const std::filesystem::path& path);
std::vector<VerdictRecord> import_verdict_dataset(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const OPDRecord& r);
void from_json(const nlohmann::json& j, OPDRecord& r);
void to_json(nlohmann::json& j, const VerdictRecord& r);
void from_json(const nlohmann::json& j, VerdictRecord& r);
void to_json(nlohmann::json& j, const StvLossReport& r);

}  // namespace vrloop
