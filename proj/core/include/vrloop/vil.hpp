#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

struct VilTurn {
  std::string role;  // "generator" | "verifier"
  int round = 0;
  Messages context;     // generator turns: the exact prompt the generator saw
  std::string content;  // generator: solution y_r; verifier: feedback as delivered
  std::optional<Verdict> verdict;
  TokenUsage usage;

  friend bool operator==(const VilTurn&, const VilTurn&) = default;
};

struct VilEpisode {
  std::string problem_id;
  int loop_id = 0;
  std::uint64_t seed = 0;
  std::string verifier_id;
  bool verifier_frozen = true;
  std::vector<VilTurn> turns;
  int final_reward = 0;  // terminal only; no intermediate rewards
  Termination termination = Termination::MaxRounds;

  int generator_turns() const;
  friend bool operator==(const VilEpisode&, const VilEpisode&) = default;
};

// Rebuilds generator-side contexts from the templates the agents render.
VilEpisode episode_from_trace(const VRTrace& trace, const Problem& problem, const PromptSet& prompts,
                              const std::string& verifier_id);

struct VilAuditEntry {
  std::string problem_id;
  int loop_id = 0;
  std::string reason;
};

// Runs one V-R loop with a frozen, plain-mode verifier and turns it into an
// episode. Loop errors discard the episode (nullopt) with an audit entry.
std::optional<VilEpisode> collect_vil_episode(const Problem& problem, GeneratorAgent& generator,
                                              VerifierAgent& frozen_verifier, const PromptSet& prompts,
                                              const LoopConfig& config, int loop_id, std::uint64_t seed,
                                              std::vector<VilAuditEntry>* audit = nullptr);

// Scans generator-visible text other than the problem statement and the
// generator's own outputs. Any hit of the gold answer or of reference-only
// template text is a leak.
std::vector<std::string> episode_hygiene_violations(const VilEpisode& episode, const Problem& problem,
                                                    std::span<const std::string> reference_markers = {});

// Literal lines that only the reference-conditioned verifier template
// contains; their presence in generator context means teacher leakage.
std::vector<std::string> reference_markers(const PromptSet& prompts);

inline constexpr int kVilSchemaVersion = 1;

void export_episodes(std::span<const VilEpisode> episodes, const std::filesystem::path& path);
std::vector<VilEpisode> import_episodes(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const VilTurn& t);
void from_json(const nlohmann::json& j, VilTurn& t);
void to_json(nlohmann::json& j, const VilEpisode& e);
void from_json(const nlohmann::json& j, VilEpisode& e);

}  // namespace vrloop
