#include "vrloop/stv.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "vrloop/errors.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/seed.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

void StvConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("stv alpha must lie in (0,1)");
  if (!(lambda >= 0.0)) throw ConfigError("stv lambda must be >= 0");
  if (samples_per_pair < 1) throw ConfigError("stv samples_per_pair must be >= 1");
}

std::vector<OpdPosition> score_positions(std::span<const TokenDist> student, std::span<const TokenDist> teacher,
                                         const StvConfig& config) {
  if (student.size() != teacher.size()) {
    throw Error("student and teacher sequences differ in length (" + std::to_string(student.size()) + " vs " +
                std::to_string(teacher.size()) + ")");
  }
  std::vector<OpdPosition> out;
  out.reserve(student.size());
  for (std::size_t i = 0; i < student.size(); ++i) {
    auto aligned = align_distributions(student[i], teacher[i]);
    OpdPosition pos;
    pos.student = student[i];
    pos.teacher = teacher[i];
    pos.divergence = divergence(config.divergence_kind, aligned.p, aligned.q, config.alpha);
    pos.support = std::move(aligned.support);
    pos.student_aligned = std::move(aligned.p);
    pos.teacher_aligned = std::move(aligned.q);
    out.push_back(std::move(pos));
  }
  return out;
}

std::vector<OPDRecord> build_opd_records(LogprobBackend& student, LogprobBackend& teacher, const PromptSet& prompts,
                                         std::span<const OpdPair> pairs, const StvConfig& config,
                                         const SamplingParams& sampling, std::uint64_t seed,
                                         std::vector<OpdAuditEntry>* audit) {
  config.validate();
  std::vector<OPDRecord> records;
  for (const auto& pair : pairs) {
    if (pair.problem.gold_answer.empty()) {
      if (audit) audit->push_back({pair.attempt_ref, 0, "no reference answer for teacher"});
      continue;
    }
    const auto student_msgs = render_prompt(prompts, TemplateId::VerifierPlain,
                                            {{"statement", pair.problem.statement},
                                             {"prior_solution", pair.attempt.text}});
    const auto teacher_msgs = render_prompt(prompts, TemplateId::VerifierTeacher,
                                            {{"statement", pair.problem.statement},
                                             {"prior_solution", pair.attempt.text},
                                             {"reference_solution", pair.problem.gold_answer}});
    for (int s = 0; s < config.samples_per_pair; ++s) {
      try {
        SamplingParams params = sampling;
        params.seed = derive_seed(seed, pair.attempt_ref, s, 0, SeedRole::Student);
        const auto completion = student.complete_with_logprobs(student_msgs, params);
        for (const auto& d : completion.tokens) d.validate();

        std::vector<std::string> tokens;
        tokens.reserve(completion.tokens.size());
        for (const auto& d : completion.tokens) tokens.push_back(d.chosen_token);
        const auto teacher_dists = teacher.score_along(teacher_msgs, tokens, sampling.top_logprobs);
        for (const auto& d : teacher_dists) d.validate();

        OPDRecord rec;
        rec.problem_id = pair.problem.id;
        rec.attempt_ref = pair.attempt_ref;
        rec.sample_index = s;
        rec.student_text = completion.text;
        rec.student_tokens = std::move(tokens);
        rec.positions = score_positions(completion.tokens, teacher_dists, config);
        double sum = 0.0;
        for (const auto& p : rec.positions) sum += p.divergence;
        rec.mean_divergence = rec.positions.empty() ? 0.0 : sum / static_cast<double>(rec.positions.size());
        rec.divergence_kind = config.divergence_kind;
        rec.alpha = config.alpha;
        rec.teacher_scoring = teacher.scoring_mechanism();
        rec.student_verdict = parse_verdict(completion.text).verdict;
        rec.attempt_correct = pair.attempt.correct;
        records.push_back(std::move(rec));
      } catch (const TransportError& e) {
        if (audit) audit->push_back({pair.attempt_ref, s, e.what()});
      } catch (const SchemaError& e) {
        if (audit) audit->push_back({pair.attempt_ref, s, e.what()});
      }
    }
  }
  return records;
}

int verdict_reward(Verdict verdict, bool attempt_correct) {
  return (verdict == Verdict::Accept) == attempt_correct ? 1 : 0;
}

std::vector<VerdictRecord> verdict_records_from(std::span<const OPDRecord> records, std::span<const OpdPair> pairs,
                                                const PromptSet& prompts) {
  std::map<std::string, const OpdPair*> by_ref;
  for (const auto& p : pairs) by_ref.emplace(p.attempt_ref, &p);
  std::vector<VerdictRecord> out;
  for (const auto& r : records) {
    if (!r.attempt_correct) continue;
    VerdictRecord v;
    v.problem_id = r.problem_id;
    v.attempt_ref = r.attempt_ref;
    if (const auto it = by_ref.find(r.attempt_ref); it != by_ref.end()) {
      v.prompt = render_prompt(prompts, TemplateId::VerifierPlain,
                               {{"statement", it->second->problem.statement},
                                {"prior_solution", it->second->attempt.text}});
    }
    v.verdict = r.student_verdict;
    v.attempt_correct = *r.attempt_correct;
    v.reward = verdict_reward(v.verdict, v.attempt_correct);
    out.push_back(std::move(v));
  }
  return out;
}

StvLossReport stv_loss_report(std::span<const OPDRecord> opd, std::span<const VerdictRecord> verdicts,
                              double lambda) {
  if (opd.empty() || verdicts.empty()) throw Error("stv_loss_report: empty record set");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  StvLossReport report;
  report.lambda = lambda;
  report.opd_records = opd.size();
  report.verdict_records = verdicts.size();
  double div = 0.0;
  for (const auto& r : opd) div += r.mean_divergence;
  report.opd_loss = div / static_cast<double>(opd.size());
  double reward = 0.0;
  for (const auto& v : verdicts) reward += v.reward;
  report.mean_reward = reward / static_cast<double>(verdicts.size());
  report.rl_loss = -report.mean_reward;
  report.total = report.opd_loss + lambda * report.rl_loss;
  return report;
}

void to_json(json& j, const OPDRecord& r) {
  json positions = json::array();
  for (const auto& p : r.positions) {
    positions.push_back(json{{"student", p.student},
                             {"teacher", p.teacher},
                             {"support", p.support},
                             {"student_aligned", p.student_aligned},
                             {"teacher_aligned", p.teacher_aligned},
                             {"divergence", p.divergence}});
  }
  j = json{{"problem_id", r.problem_id},
           {"attempt_ref", r.attempt_ref},
           {"sample_index", r.sample_index},
           {"sampled_by", r.sampled_by},
           {"student_text", r.student_text},
           {"student_tokens", r.student_tokens},
           {"positions", std::move(positions)},
           {"mean_divergence", r.mean_divergence},
           {"divergence_kind", to_string(r.divergence_kind)},
           {"alpha", r.alpha},
           {"teacher_scoring", r.teacher_scoring},
           {"student_verdict", to_string(r.student_verdict)},
           {"attempt_correct", r.attempt_correct ? json(*r.attempt_correct) : json(nullptr)}};
}

void from_json(const json& j, OPDRecord& r) {
  j.at("problem_id").get_to(r.problem_id);
  j.at("attempt_ref").get_to(r.attempt_ref);
  j.at("sample_index").get_to(r.sample_index);
  j.at("sampled_by").get_to(r.sampled_by);
  j.at("student_text").get_to(r.student_text);
  j.at("student_tokens").get_to(r.student_tokens);
  r.positions.clear();
  for (const auto& p : j.at("positions")) {
    OpdPosition pos;
    p.at("student").get_to(pos.student);
    p.at("teacher").get_to(pos.teacher);
    p.at("support").get_to(pos.support);
    p.at("student_aligned").get_to(pos.student_aligned);
    p.at("teacher_aligned").get_to(pos.teacher_aligned);
    p.at("divergence").get_to(pos.divergence);
    r.positions.push_back(std::move(pos));
  }
  j.at("mean_divergence").get_to(r.mean_divergence);
  r.divergence_kind = parse_divergence_kind(j.at("divergence_kind").get<std::string>());
  j.at("alpha").get_to(r.alpha);
  j.at("teacher_scoring").get_to(r.teacher_scoring);
  r.student_verdict = parse_verdict_name(j.at("student_verdict").get<std::string>());
  if (const auto it = j.find("attempt_correct"); it != j.end() && !it->is_null()) {
    r.attempt_correct = it->get<bool>();
  } else {
    r.attempt_correct.reset();
  }
}

void to_json(json& j, const VerdictRecord& r) {
  j = json{{"problem_id", r.problem_id},
           {"attempt_ref", r.attempt_ref},
           {"prompt", r.prompt},
           {"verdict", to_string(r.verdict)},
           {"attempt_correct", r.attempt_correct},
           {"reward", r.reward}};
}

void from_json(const json& j, VerdictRecord& r) {
  j.at("problem_id").get_to(r.problem_id);
  j.at("attempt_ref").get_to(r.attempt_ref);
  j.at("prompt").get_to(r.prompt);
  r.verdict = parse_verdict_name(j.at("verdict").get<std::string>());
  j.at("attempt_correct").get_to(r.attempt_correct);
  j.at("reward").get_to(r.reward);
}

void to_json(json& j, const StvLossReport& r) {
  j = json{{"opd_loss", r.opd_loss},         {"rl_loss", r.rl_loss},
           {"mean_reward", r.mean_reward},   {"lambda", r.lambda},
           {"total", r.total},               {"opd_records", r.opd_records},
           {"verdict_records", r.verdict_records}};
}

namespace {

template <typename Record>
std::vector<Record> import_rows(const std::filesystem::path& path, std::string_view schema, int version) {
  std::ifstream probe(path);
  if (!probe) throw IoError("cannot open " + path.string());
  std::string first;
  std::getline(probe, first);
  try {
    const auto header = json::parse(first);
    if (!is_export_header(header) || header.at("schema") != schema || header.at("schema_version") != version) {
      throw SchemaError(path.string() + ": expected header for " + std::string(schema));
    }
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": bad header: " + e.what());
  }
  const auto rows = read_jsonl(path);
  if (rows.torn_tail) throw SchemaError(path.string() + ": truncated final line");
  std::vector<Record> out;
  out.reserve(rows.records.size());
  try {
    for (const auto& row : rows.records) out.push_back(row.get<Record>());
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace

void export_opd_dataset(std::span<const OPDRecord> records, const std::filesystem::path& path) {
  std::vector<json> rows(records.begin(), records.end());
  write_jsonl_export(path, export_header("vrloop.opd", kOpdSchemaVersion), rows);
}

std::vector<OPDRecord> import_opd_dataset(const std::filesystem::path& path) {
  return import_rows<OPDRecord>(path, "vrloop.opd", kOpdSchemaVersion);
}

void export_verdict_dataset(std::span<const VerdictRecord> records, const std::filesystem::path& path) {
  std::vector<json> rows(records.begin(), records.end());
  write_jsonl_export(path, export_header("vrloop.verdict", kVerdictSchemaVersion), rows);
}

std::vector<VerdictRecord> import_verdict_dataset(const std::filesystem::path& path) {
  return import_rows<VerdictRecord>(path, "vrloop.verdict", kVerdictSchemaVersion);
}

}  // namespace vrloop
