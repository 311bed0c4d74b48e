#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/http_client.hpp"
#include "vrloop/sim_agents.hpp"
#include "vrloop/stv.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

// An agent is either simulated or an OpenAI-compatible endpoint.
struct AgentSpec {
  std::string kind = "sim";  // "sim" | "http" (logprob agents: "seeded" | "http")
  EndpointConfig endpoint;
  std::string api_key_env;  // environment variable holding the key
  SimGeneratorParams sim_generator;
  SimVerifierParams sim_verifier;
  SeededLogprobParams seeded;
  ScoreSource score_source = ScoreSource::SelfReported;
  TeacherScoring teacher_scoring = TeacherScoring::Continuation;
};

struct RunConfig {
  // run
  std::string run_id = "run";
  std::filesystem::path output_dir = "runs/run";
  std::uint64_t seed = 0;
  int loops_per_problem = 32;
  int in_flight = 32;

  // dataset
  std::filesystem::path problems;
  std::filesystem::path train_problems;
  std::filesystem::path embeddings_file;  // precomputed {"id","vector"} JSONL
  std::string embeddings_kind = "hashed";  // "hashed" | "file" | "http"
  std::size_t hashed_dim = 256;
  AgentSpec embedder;
  double dedup_threshold = 0.8;
  int rollouts = 32;

  LoopConfig loop;
  int bon_n = 21;  // default max_rounds + 1

  AgentSpec generator;
  AgentSpec verifier;
  AgentSpec student;
  AgentSpec teacher;

  StvConfig stv;
  SamplingParams student_sampling;
  int opd_pairs_per_problem = 4;

  int vil_episodes_per_problem = 0;  // 0: one per loop

  std::filesystem::path prompts_dir;  // empty: built-in templates

  std::vector<int> metrics_ks{1, 4, 16, 32};
  std::vector<int> metrics_budgets;  // empty: 0..max_rounds

  // Canonical JSON of everything that affects outputs (no secrets, no
  // concurrency settings).
  nlohmann::json canonical() const;
  // SHA-256 hex digest of canonical().dump().
  std::string hash() const;
};

// Reads and validates a YAML config. Relative paths resolve against the
// config file's directory. Unknown keys and bad values raise ConfigError
// naming the offending key.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = {});

// Resolves credentials from the environment: the agent's api_key_env when
// set, else VRLOOP_API_KEY.
void apply_env_overrides(RunConfig& config);

std::string sha256_hex(std::string_view data);

PromptSet load_prompts(const RunConfig& config);
std::unique_ptr<GeneratorAgent> make_generator(const AgentSpec& spec, const PromptSet& prompts);
std::unique_ptr<VerifierAgent> make_verifier(const AgentSpec& spec, const PromptSet& prompts,
                                             const std::string& name = "sim-verifier");
std::unique_ptr<LogprobBackend> make_logprob_backend(const AgentSpec& spec, const std::string& name);
std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& config);

}  // namespace vrloop
