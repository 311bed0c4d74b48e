#include "vrloop/vil.hpp"

#include <algorithm>
#include <fstream>

#include "vrloop/errors.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/loop.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

namespace {

TokenUsage usage_for(const VRTrace& trace, std::string_view role, int round) {
  for (const auto& u : trace.usage) {
    if (u.role == role && u.round == round) return u.tokens;
  }
  return {};
}

void erase_all(std::string& s, std::string_view needle) {
  if (needle.empty()) return;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p)) s.erase(p, needle.size());
}

}  // namespace

int VilEpisode::generator_turns() const {
  return static_cast<int>(
      std::count_if(turns.begin(), turns.end(), [](const VilTurn& t) { return t.role == "generator"; }));
}

VilEpisode episode_from_trace(const VRTrace& trace, const Problem& problem, const PromptSet& prompts,
                              const std::string& verifier_id) {
  if (trace.problem_id != problem.id) throw Error("trace/problem id mismatch");
  VilEpisode ep;
  ep.problem_id = trace.problem_id;
  ep.loop_id = trace.loop_id;
  ep.seed = trace.seed;
  ep.verifier_id = verifier_id;
  ep.termination = trace.termination;

  for (std::size_t i = 0; i < trace.rounds.size(); ++i) {
    const auto& rec = trace.rounds[i];
    VilTurn gen;
    gen.role = "generator";
    gen.round = rec.attempt.round_index;
    if (i == 0) {
      gen.context = render_prompt(prompts, TemplateId::GeneratorInitial, {{"statement", problem.statement}});
    } else {
      const auto& prev = trace.rounds[i - 1];
      SlotMap slots{{"statement", problem.statement}, {"prior_solution", prev.attempt.text}};
      if (prev.verifier_output && !prev.verifier_output->feedback.empty()) {
        slots.emplace("feedback", prev.verifier_output->feedback);
      }
      gen.context = render_prompt(prompts, TemplateId::GeneratorRefine, slots);
    }
    gen.content = rec.attempt.text;
    gen.usage = usage_for(trace, "generator", gen.round);
    ep.turns.push_back(std::move(gen));

    if (rec.verifier_output) {
      VilTurn ver;
      ver.role = "verifier";
      ver.round = static_cast<int>(i) + 1;
      ver.content = rec.verifier_output->feedback;
      ver.verdict = rec.verifier_output->verdict;
      ver.usage = usage_for(trace, "verifier", ver.round);
      ep.turns.push_back(std::move(ver));
    }
  }
  // A verification that produced no refinement (only possible on accept) ends
  // the episode; anything else ends on a generator turn.
  ep.final_reward = !trace.rounds.empty() && trace.rounds.back().attempt.correct.value_or(false) ? 1 : 0;
  return ep;
}

std::optional<VilEpisode> collect_vil_episode(const Problem& problem, GeneratorAgent& generator,
                                              VerifierAgent& frozen_verifier, const PromptSet& prompts,
                                              const LoopConfig& config, int loop_id, std::uint64_t seed,
                                              std::vector<VilAuditEntry>* audit) {
  if (!frozen_verifier.frozen()) {
    throw ConfigError("verifier '" + frozen_verifier.identity() + "' must be frozen for episode collection");
  }
  const auto trace = run_vr_loop(problem, generator, frozen_verifier, config, loop_id, seed);
  if (trace.termination == Termination::Error) {
    if (audit) audit->push_back({problem.id, loop_id, trace.error.value_or("loop error")});
    return std::nullopt;
  }
  auto ep = episode_from_trace(trace, problem, prompts, frozen_verifier.identity());
  ep.verifier_frozen = true;
  return ep;
}

std::vector<std::string> episode_hygiene_violations(const VilEpisode& episode, const Problem& problem,
                                                    std::span<const std::string> reference_markers) {
  std::vector<std::string> violations;
  // The statement is legitimately visible; only the rest is scanned.
  std::vector<std::string> own_outputs{problem.statement};
  const auto check = [&](std::string text, const std::string& where) {
    for (const auto& out : own_outputs) erase_all(text, out);
    if (!problem.gold_answer.empty() && text.find(problem.gold_answer) != std::string::npos) {
      violations.push_back(where + ": contains the gold answer");
    }
    for (const auto& marker : reference_markers) {
      if (!marker.empty() && text.find(marker) != std::string::npos) {
        violations.push_back(where + ": contains reference-only text '" + marker + "'");
      }
    }
  };
  for (std::size_t i = 0; i < episode.turns.size(); ++i) {
    const auto& turn = episode.turns[i];
    const std::string where = episode.problem_id + "#" + std::to_string(episode.loop_id) + " turn " +
                              std::to_string(i) + " (" + turn.role + ")";
    if (turn.role == "generator") {
      for (const auto& m : turn.context) check(m.content, where);
      own_outputs.push_back(turn.content);
    } else {
      check(turn.content, where);
    }
  }
  return violations;
}

std::vector<std::string> reference_markers(const PromptSet& prompts) {
  const auto& teacher = prompts.get(TemplateId::VerifierTeacher).body();
  const std::string shared = prompts.get(TemplateId::GeneratorInitial).body() + "\n" +
                             prompts.get(TemplateId::GeneratorRefine).body() + "\n" +
                             prompts.get(TemplateId::VerifierPlain).body();
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= teacher.size()) {
    auto end = teacher.find('\n', start);
    if (end == std::string::npos) end = teacher.size();
    auto line = teacher.substr(start, end - start);
    start = end + 1;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    if (line.find("{{") != std::string::npos || shared.find(line) != std::string::npos) continue;
    out.push_back(std::move(line));
  }
  return out;
}

void to_json(json& j, const VilTurn& t) {
  j = json{{"role", t.role},
           {"round", t.round},
           {"context", t.context},
           {"content", t.content},
           {"verdict", t.verdict ? json(to_string(*t.verdict)) : json(nullptr)},
           {"usage", t.usage}};
}

void from_json(const json& j, VilTurn& t) {
  j.at("role").get_to(t.role);
  j.at("round").get_to(t.round);
  j.at("context").get_to(t.context);
  j.at("content").get_to(t.content);
  if (const auto it = j.find("verdict"); it != j.end() && !it->is_null()) {
    t.verdict = parse_verdict_name(it->get<std::string>());
  } else {
    t.verdict.reset();
  }
  j.at("usage").get_to(t.usage);
}

void to_json(json& j, const VilEpisode& e) {
  j = json{{"problem_id", e.problem_id},
           {"loop_id", e.loop_id},
           {"seed", e.seed},
           {"verifier_id", e.verifier_id},
           {"verifier_frozen", e.verifier_frozen},
           {"turns", e.turns},
           {"final_reward", e.final_reward},
           {"termination", to_string(e.termination)}};
}

void from_json(const json& j, VilEpisode& e) {
  j.at("problem_id").get_to(e.problem_id);
  j.at("loop_id").get_to(e.loop_id);
  j.at("seed").get_to(e.seed);
  j.at("verifier_id").get_to(e.verifier_id);
  j.at("verifier_frozen").get_to(e.verifier_frozen);
  j.at("turns").get_to(e.turns);
  j.at("final_reward").get_to(e.final_reward);
  e.termination = parse_termination(j.at("termination").get<std::string>());
}

void export_episodes(std::span<const VilEpisode> episodes, const std::filesystem::path& path) {
  std::vector<json> rows(episodes.begin(), episodes.end());
  write_jsonl_export(path, export_header("vrloop.vil_episode", kVilSchemaVersion), rows);
}

std::vector<VilEpisode> import_episodes(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  if (rows.torn_tail) throw SchemaError(path.string() + ": truncated final line");
  std::vector<VilEpisode> out;
  try {
    for (const auto& r : rows.records) out.push_back(r.get<VilEpisode>());
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace vrloop
