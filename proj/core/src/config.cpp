#include "vrloop/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "vrloop/errors.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

namespace {

// Strict view over one YAML mapping: every key must be consumed.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + "must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.insert(key);
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception& e) {
      throw ConfigError(path_ + key + ": invalid value (" + e.msg + ")");
    }
  }

  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    std::string name;
    if (!has(key)) return;
    get(key, name);
    try {
      out = parse(name);
    } catch (const Error& e) {
      throw ConfigError(path_ + key + ": " + e.what());
    }
  }

  void get_path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    if (!has(key)) return;
    get(key, s);
    out = s.empty() || std::filesystem::path(s).is_absolute() || base.empty() ? std::filesystem::path(s) : base / s;
  }

  Section child(const std::string& key) {
    if (has(key)) seen_.insert(key);
    return Section(has(key) ? node_[key] : YAML::Node(), path_ + key + ".");
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(path_ + key + ": unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "config " : path_.substr(0, path_.size() - 1) + " "; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_endpoint(Section s, AgentSpec& spec) {
  auto& e = spec.endpoint;
  s.get("base_url", e.base_url);
  s.get("model", e.model);
  s.get("api_key_env", spec.api_key_env);
  s.get("temperature", e.temperature);
  s.get("top_p", e.top_p);
  s.get("max_tokens", e.max_tokens);
  s.get("top_logprobs", e.top_logprobs);
  s.get("timeout_s", e.timeout_s);
  s.get("max_retries", e.max_retries);
  s.get("backoff_ms", e.backoff_ms);
  s.get("max_in_flight", e.max_in_flight);
  s.get("frozen", e.frozen);
  if (s.has("api_key")) {
    throw ConfigError(s.path() + "api_key: credentials are read from the environment; set api_key_env instead");
  }
  s.finish();
}

void read_agent(Section s, AgentSpec& spec, bool logprob_agent) {
  s.get("kind", spec.kind);
  const bool simulated = logprob_agent ? spec.kind == "seeded" : spec.kind == "sim";
  if (!simulated && spec.kind != "http") {
    throw ConfigError(s.path() + "kind: expected " + std::string(logprob_agent ? "seeded" : "sim") +
                      " or http, got '" + spec.kind + "'");
  }
  read_endpoint(s.child("endpoint"), spec);

  auto sim = s.child(logprob_agent ? "seeded" : "sim");
  if (logprob_agent) {
    sim.get("vocab_size", spec.seeded.vocab_size);
    sim.get("response_tokens", spec.seeded.response_tokens);
    sim.get("salt", spec.seeded.salt);
  } else {
    auto& g = spec.sim_generator;
    sim.get("solve_prob_hardest", g.solve_prob_hardest);
    sim.get("solve_prob_hard", g.solve_prob_hard);
    sim.get("solve_prob_excluded", g.solve_prob_excluded);
    sim.get("solve_prob_unbinned", g.solve_prob_unbinned);
    sim.get("uplift_informative", g.uplift_informative);
    sim.get("uplift_generic", g.uplift_generic);
    sim.get_enum("refine_draw", g.refine_draw, parse_refine_draw);
    auto& v = spec.sim_verifier;
    sim.get("tpr", v.tpr);
    sim.get("fpr", v.fpr);
    sim.get("teacher_tpr", v.teacher_tpr);
    sim.get("teacher_fpr", v.teacher_fpr);
    sim.get("informative_feedback_prob", v.informative_feedback_prob);
    sim.get_enum("score_mode", v.score_mode, parse_score_mode);
    sim.get("base_score", v.base_score);
    sim.get("score_drift", v.score_drift);
    sim.get("frozen", v.frozen);
  }
  sim.finish();
  s.get_enum("score_source", spec.score_source, parse_score_source);
  s.get_enum("teacher_scoring", spec.teacher_scoring, parse_teacher_scoring);
  s.finish();

  try {
    spec.sim_generator.validate();
    spec.sim_verifier.validate();
  } catch (const Error& e) {
    throw ConfigError(s.path() + "sim: " + e.what());
  }
}

json endpoint_json(const AgentSpec& a) {
  const auto& e = a.endpoint;
  return json{{"base_url", e.base_url},       {"model", e.model},           {"temperature", e.temperature},
              {"top_p", e.top_p},             {"max_tokens", e.max_tokens}, {"top_logprobs", e.top_logprobs},
              {"frozen", e.frozen}};
}

json agent_json(const AgentSpec& a) {
  json j{{"kind", a.kind}};
  if (a.kind == "http") {
    j["endpoint"] = endpoint_json(a);
    j["score_source"] = to_string(a.score_source);
    j["teacher_scoring"] = to_string(a.teacher_scoring);
    return j;
  }
  const auto& g = a.sim_generator;
  const auto& v = a.sim_verifier;
  j["sim_generator"] = json{{"solve_prob_hardest", g.solve_prob_hardest},
                            {"solve_prob_hard", g.solve_prob_hard},
                            {"solve_prob_excluded", g.solve_prob_excluded},
                            {"solve_prob_unbinned", g.solve_prob_unbinned},
                            {"uplift_informative", g.uplift_informative},
                            {"uplift_generic", g.uplift_generic},
                            {"refine_draw", to_string(g.refine_draw)}};
  j["sim_verifier"] = json{{"tpr", v.tpr},
                           {"fpr", v.fpr},
                           {"teacher_tpr", v.teacher_tpr},
                           {"teacher_fpr", v.teacher_fpr},
                           {"informative_feedback_prob", v.informative_feedback_prob},
                           {"score_mode", to_string(v.score_mode)},
                           {"base_score", v.base_score},
                           {"score_drift", v.score_drift},
                           {"frozen", v.frozen}};
  j["seeded"] = json{{"vocab_size", a.seeded.vocab_size},
                     {"response_tokens", a.seeded.response_tokens},
                     {"salt", a.seeded.salt}};
  return j;
}

std::string file_digest(const std::filesystem::path& p) {
  if (p.empty()) return {};
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing";
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

json RunConfig::canonical() const {
  return json{{"seed", seed},
              {"loops_per_problem", loops_per_problem},
              {"dataset", {{"problems", file_digest(problems)},
                           {"train", file_digest(train_problems)},
                           {"embeddings_kind", embeddings_kind},
                           {"embeddings_file", file_digest(embeddings_file)},
                           {"hashed_dim", hashed_dim},
                           {"embedder", embeddings_kind == "http" ? endpoint_json(embedder) : json(nullptr)},
                           {"dedup_threshold", dedup_threshold},
                           {"rollouts", rollouts}}},
              {"loop", {{"max_rounds", loop.max_rounds},
                        {"verdict_mode", to_string(loop.verdict_mode)},
                        {"feedback_mode", to_string(loop.feedback_mode)},
                        {"generic_feedback_text", loop.generic_feedback_text}}},
              {"bon_n", bon_n},
              {"generator", agent_json(generator)},
              {"verifier", agent_json(verifier)},
              {"student", agent_json(student)},
              {"teacher", agent_json(teacher)},
              {"stv", {{"alpha", stv.alpha},
                       {"divergence_kind", to_string(stv.divergence_kind)},
                       {"lambda", stv.lambda},
                       {"samples_per_pair", stv.samples_per_pair},
                       {"pairs_per_problem", opd_pairs_per_problem},
                       {"temperature", student_sampling.temperature},
                       {"top_p", student_sampling.top_p},
                       {"max_tokens", student_sampling.max_tokens},
                       {"top_logprobs", student_sampling.top_logprobs}}},
              {"vil_episodes_per_problem", vil_episodes_per_problem},
              {"prompts", prompts_dir.empty() ? std::string("builtin") : prompts_dir.string()},
              {"metrics", {{"ks", metrics_ks}, {"budgets", metrics_budgets}}}};
}

std::string RunConfig::hash() const { return sha256_hex(canonical().dump()); }

RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config: YAML syntax error: " + std::string(e.what()));
  }
  RunConfig c;
  Section top(root, "");

  auto run = top.child("run");
  run.get("id", c.run_id);
  c.output_dir = "runs/" + c.run_id;
  run.get_path("output_dir", c.output_dir, base_dir);
  run.get("seed", c.seed);
  run.get("loops_per_problem", c.loops_per_problem);
  run.get("in_flight", c.in_flight);
  run.finish();

  auto ds = top.child("dataset");
  ds.get_path("problems", c.problems, base_dir);
  ds.get_path("train", c.train_problems, base_dir);
  ds.get("dedup_threshold", c.dedup_threshold);
  ds.get("rollouts", c.rollouts);
  auto emb = ds.child("embeddings");
  emb.get("kind", c.embeddings_kind);
  emb.get_path("file", c.embeddings_file, base_dir);
  emb.get("dim", c.hashed_dim);
  read_endpoint(emb.child("endpoint"), c.embedder);
  emb.finish();
  ds.finish();
  if (c.embeddings_kind != "hashed" && c.embeddings_kind != "file" && c.embeddings_kind != "http") {
    throw ConfigError("dataset.embeddings.kind: expected hashed, file or http");
  }
  if (c.embeddings_kind == "file" && c.embeddings_file.empty()) {
    throw ConfigError("dataset.embeddings.file: required when kind is file");
  }

  auto lp = top.child("loop");
  lp.get("max_rounds", c.loop.max_rounds);
  lp.get_enum("verdict_mode", c.loop.verdict_mode, parse_verdict_mode);
  lp.get_enum("feedback_mode", c.loop.feedback_mode, parse_feedback_mode);
  lp.get("generic_feedback_text", c.loop.generic_feedback_text);
  lp.finish();

  c.bon_n = c.loop.max_rounds + 1;
  auto bon = top.child("bon");
  bon.get("n", c.bon_n);
  bon.finish();

  c.student.kind = "seeded";
  c.teacher.kind = "seeded";
  c.teacher.seeded.salt = 1;
  read_agent(top.child("generator"), c.generator, false);
  read_agent(top.child("verifier"), c.verifier, false);
  read_agent(top.child("student"), c.student, true);
  read_agent(top.child("teacher"), c.teacher, true);

  auto stv = top.child("stv");
  stv.get("alpha", c.stv.alpha);
  stv.get_enum("divergence_kind", c.stv.divergence_kind, parse_divergence_kind);
  stv.get("lambda", c.stv.lambda);
  stv.get("samples_per_pair", c.stv.samples_per_pair);
  stv.get("pairs_per_problem", c.opd_pairs_per_problem);
  stv.get("temperature", c.student_sampling.temperature);
  stv.get("top_p", c.student_sampling.top_p);
  stv.get("max_tokens", c.student_sampling.max_tokens);
  stv.get("top_logprobs", c.student_sampling.top_logprobs);
  stv.finish();

  auto vil = top.child("vil");
  vil.get("episodes_per_problem", c.vil_episodes_per_problem);
  vil.finish();

  auto prompts = top.child("prompts");
  prompts.get_path("dir", c.prompts_dir, base_dir);
  prompts.finish();

  auto metrics = top.child("metrics");
  metrics.get("ks", c.metrics_ks);
  metrics.get("budgets", c.metrics_budgets);
  metrics.finish();

  top.finish();

  try {
    c.loop.validate();
    c.stv.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.loops_per_problem < 1) throw ConfigError("run.loops_per_problem: must be >= 1");
  if (c.in_flight < 1) throw ConfigError("run.in_flight: must be >= 1");
  if (c.bon_n < 1) throw ConfigError("bon.n: must be >= 1");
  if (c.rollouts < 1) throw ConfigError("dataset.rollouts: must be >= 1");
  if (c.opd_pairs_per_problem < 1) throw ConfigError("stv.pairs_per_problem: must be >= 1");
  if (c.vil_episodes_per_problem < 0) throw ConfigError("vil.episodes_per_problem: must be >= 0");
  if (c.student_sampling.top_logprobs < 1) throw ConfigError("stv.top_logprobs: must be >= 1");
  for (const int k : c.metrics_ks) {
    if (k < 1) throw ConfigError("metrics.ks: entries must be >= 1");
  }
  for (const int b : c.metrics_budgets) {
    if (b < 0) throw ConfigError("metrics.budgets: entries must be >= 0");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void apply_env_overrides(RunConfig& config) {
  for (auto* spec : {&config.generator, &config.verifier, &config.student, &config.teacher, &config.embedder}) {
    const std::string var = spec->api_key_env.empty() ? "VRLOOP_API_KEY" : spec->api_key_env;
    if (const char* v = std::getenv(var.c_str()); v && *v) spec->endpoint.api_key = v;
  }
}

PromptSet load_prompts(const RunConfig& config) {
  return config.prompts_dir.empty() ? PromptSet::defaults() : PromptSet::load_dir(config.prompts_dir);
}

std::unique_ptr<GeneratorAgent> make_generator(const AgentSpec& spec, const PromptSet& prompts) {
  if (spec.kind == "sim") return std::make_unique<SimGenerator>(spec.sim_generator, prompts);
  return std::make_unique<HttpGenerator>(std::make_shared<ChatClient>(spec.endpoint), prompts);
}

std::unique_ptr<VerifierAgent> make_verifier(const AgentSpec& spec, const PromptSet& prompts,
                                             const std::string& name) {
  if (spec.kind == "sim") return std::make_unique<SimVerifier>(spec.sim_verifier, prompts, name);
  return std::make_unique<HttpVerifier>(std::make_shared<ChatClient>(spec.endpoint), prompts, spec.score_source);
}

std::unique_ptr<LogprobBackend> make_logprob_backend(const AgentSpec& spec, const std::string& name) {
  if (spec.kind == "seeded") return std::make_unique<SeededLogprobBackend>(spec.seeded, name);
  return std::make_unique<HttpLogprobBackend>(std::make_shared<ChatClient>(spec.endpoint), spec.teacher_scoring);
}

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& config) {
  if (config.embeddings_kind == "hashed") return std::make_unique<HashedEmbeddingProvider>(config.hashed_dim);
  if (config.embeddings_kind == "http") {
    return std::make_unique<HttpEmbeddingProvider>(std::make_shared<ChatClient>(config.embedder.endpoint));
  }
  return nullptr;
}

}  // namespace vrloop
