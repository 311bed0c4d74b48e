#include "vrloop/serialize.hpp"

#include "vrloop/errors.hpp"

namespace vrloop {

namespace {

template <typename T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from_json(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

void to_json(json& j, const Rational& r) { j = json{{"num", r.num}, {"den", r.den}}; }
void from_json(const json& j, Rational& r) {
  j.at("num").get_to(r.num);
  j.at("den").get_to(r.den);
}

void to_json(json& j, const Problem& p) {
  j = json{{"id", p.id}, {"statement", p.statement}, {"gold_answer", p.gold_answer}, {"source", p.source}};
  if (p.bin) j["bin"] = to_string(*p.bin);
  if (p.pass1_estimate) j["pass1_estimate"] = *p.pass1_estimate;
}

void from_json(const json& j, Problem& p) {
  j.at("id").get_to(p.id);
  j.at("statement").get_to(p.statement);
  p.gold_answer = j.value("gold_answer", std::string{});
  p.source = j.value("source", std::string{});
  if (const auto it = j.find("bin"); it != j.end() && !it->is_null()) p.bin = parse_bin(it->get<std::string>());
  p.pass1_estimate = optional_from_json<Rational>(j, "pass1_estimate");
}

void to_json(json& j, const Attempt& a) {
  j = json{{"round_index", a.round_index},
           {"text", a.text},
           {"extracted_answer", optional_to_json(a.extracted_answer)},
           {"correct", optional_to_json(a.correct)}};
}

void from_json(const json& j, Attempt& a) {
  j.at("round_index").get_to(a.round_index);
  j.at("text").get_to(a.text);
  a.extracted_answer = optional_from_json<std::string>(j, "extracted_answer");
  a.correct = optional_from_json<bool>(j, "correct");
}

void to_json(json& j, const VerifierOutput& v) {
  j = json{{"verdict", to_string(v.verdict)},
           {"feedback", v.feedback},
           {"score", optional_to_json(v.score)},
           {"raw", v.raw},
           {"mode", to_string(v.mode)}};
}

void from_json(const json& j, VerifierOutput& v) {
  v.verdict = parse_verdict_name(j.at("verdict").get<std::string>());
  j.at("feedback").get_to(v.feedback);
  v.score = optional_from_json<double>(j, "score");
  v.raw = j.value("raw", std::string{});
  v.mode = parse_verdict_mode(j.value("mode", std::string{"model"}));
}

void to_json(json& j, const RoundRecord& r) {
  j = json{{"attempt", r.attempt}, {"verifier_output", optional_to_json(r.verifier_output)}};
}

void from_json(const json& j, RoundRecord& r) {
  j.at("attempt").get_to(r.attempt);
  r.verifier_output = optional_from_json<VerifierOutput>(j, "verifier_output");
}

void to_json(json& j, const TokenUsage& u) {
  j = json{{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}, {"wall_ms", u.wall_ms}};
}

void from_json(const json& j, TokenUsage& u) {
  u.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  u.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  u.wall_ms = j.value("wall_ms", 0.0);
}

void to_json(json& j, const CallUsage& u) {
  j = json(u.tokens);
  j["role"] = u.role;
  j["round"] = u.round;
}

void from_json(const json& j, CallUsage& u) {
  j.at("role").get_to(u.role);
  j.at("round").get_to(u.round);
  u.tokens = j.get<TokenUsage>();
}

void to_json(json& j, const ChatMessage& m) { j = json{{"role", m.role}, {"content", m.content}}; }
void from_json(const json& j, ChatMessage& m) {
  j.at("role").get_to(m.role);
  j.at("content").get_to(m.content);
}

void to_json(json& j, const TokenLogprob& t) { j = json{{"token", t.token}, {"logprob", t.logprob}}; }
void from_json(const json& j, TokenLogprob& t) {
  j.at("token").get_to(t.token);
  j.at("logprob").get_to(t.logprob);
}

void to_json(json& j, const TokenDist& d) {
  j = json{{"position", d.position},
           {"chosen_token", d.chosen_token},
           {"chosen_logprob", d.chosen_logprob},
           {"alternatives", d.alternatives},
           {"tail_mass", d.tail_mass}};
}

void from_json(const json& j, TokenDist& d) {
  j.at("position").get_to(d.position);
  j.at("chosen_token").get_to(d.chosen_token);
  j.at("chosen_logprob").get_to(d.chosen_logprob);
  j.at("alternatives").get_to(d.alternatives);
  j.at("tail_mass").get_to(d.tail_mass);
}

json trace_to_json(const VRTrace& t) {
  return json{{"schema", kTraceSchema},
              {"schema_version", kTraceSchemaVersion},
              {"arm", "vr"},
              {"problem_id", t.problem_id},
              {"loop_id", t.loop_id},
              {"seed", t.seed},
              {"max_rounds", t.max_rounds},
              {"verdict_mode", to_string(t.verdict_mode)},
              {"feedback_mode", to_string(t.feedback_mode)},
              {"rounds", t.rounds},
              {"termination", to_string(t.termination)},
              {"usage", t.usage},
              {"error", optional_to_json(t.error)}};
}

VRTrace trace_from_json(const json& j) {
  try {
    if (j.value("schema", std::string{}) != kTraceSchema) throw SchemaError("not a trace record");
    const int version = j.at("schema_version").get<int>();
    if (version != kTraceSchemaVersion) {
      throw SchemaError("unsupported trace schema_version " + std::to_string(version));
    }
    VRTrace t;
    j.at("problem_id").get_to(t.problem_id);
    j.at("loop_id").get_to(t.loop_id);
    j.at("seed").get_to(t.seed);
    j.at("max_rounds").get_to(t.max_rounds);
    t.verdict_mode = parse_verdict_mode(j.at("verdict_mode").get<std::string>());
    t.feedback_mode = parse_feedback_mode(j.at("feedback_mode").get<std::string>());
    j.at("rounds").get_to(t.rounds);
    t.termination = parse_termination(j.at("termination").get<std::string>());
    j.at("usage").get_to(t.usage);
    t.error = optional_from_json<std::string>(j, "error");
    return t;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed trace: ") + e.what());
  }
}

std::string trace_line(const VRTrace& trace) { return trace_to_json(trace).dump(); }

}  // namespace vrloop
