#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vrloop/loop.hpp"
#include "vrloop/sim_agents.hpp"
#include "vrloop/vil.hpp"

using namespace vrloop;

namespace {

// Wraps a generator and records the context of every call.
class RecordingGenerator final : public GeneratorAgent {
 public:
  explicit RecordingGenerator(GeneratorAgent& inner) : inner_(inner) {}
  GeneratorReply generate_initial(const Problem& p, const CallContext& ctx) override {
    auto r = inner_.generate_initial(p, ctx);
    contexts.push_back(r.context);
    return r;
  }
  GeneratorReply refine(const Problem& p, const Attempt& prev, std::string_view fb, const CallContext& ctx) override {
    auto r = inner_.refine(p, prev, fb, ctx);
    contexts.push_back(r.context);
    return r;
  }
  std::string identity() const override { return inner_.identity(); }
  std::vector<Messages> contexts;

 private:
  GeneratorAgent& inner_;
};

}  // namespace

TEST(Vil, EpisodeContextsEqualWhatTheGeneratorSaw) {
  const auto prompts = PromptSet::defaults();
  SimGeneratorParams gp;
  gp.solve_prob_unbinned = 0.1;
  gp.uplift_informative = 0.1;
  SimGenerator sim(gp, prompts);
  SimVerifierParams vp;
  vp.informative_feedback_prob = 0.5;
  SimVerifier ver(vp, prompts);
  LoopConfig cfg;
  cfg.max_rounds = 6;
  for (int loop = 0; loop < 40; ++loop) {
    RecordingGenerator rec(sim);
    const auto p = vrtest::make_problem("c" + std::to_string(loop % 4), "77");
    const auto ep = collect_vil_episode(p, rec, ver, prompts, cfg, loop, 5);
    ASSERT_TRUE(ep.has_value());
    std::vector<Messages> seen;
    for (const auto& t : ep->turns) {
      if (t.role == "generator") seen.push_back(t.context);
    }
    EXPECT_EQ(seen, rec.contexts);
    EXPECT_EQ(ep->generator_turns(), static_cast<int>(rec.contexts.size()));
    EXPECT_TRUE(ep->verifier_frozen);
    EXPECT_EQ(ep->verifier_id, "sim-verifier");
  }
}

TEST(Vil, FinalRewardIsTerminalCorrectness) {
  const auto prompts = PromptSet::defaults();
  LoopConfig cfg;
  cfg.max_rounds = 3;
  const auto p = vrtest::make_problem("r", "5");
  {
    vrtest::ScriptedGenerator gen({"", "5"});
    vrtest::ScriptedVerifier ver({Verdict::Reject, Verdict::Accept});
    const auto ep = collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1);
    EXPECT_EQ(ep->final_reward, 1);
    EXPECT_EQ(ep->termination, Termination::Accepted);
    ASSERT_EQ(ep->turns.size(), 4u);
    EXPECT_EQ(ep->turns.back().role, "verifier");
  }
  {
    // Accepted but wrong: reward follows correctness, not the verdict.
    vrtest::ScriptedGenerator gen({""});
    vrtest::ScriptedVerifier ver({Verdict::Accept});
    EXPECT_EQ(collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1)->final_reward, 0);
  }
  {
    vrtest::ScriptedGenerator gen({"", "", "", "5"});
    vrtest::ScriptedVerifier ver({Verdict::Reject});
    const auto ep = collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1);
    EXPECT_EQ(ep->final_reward, 1);
    EXPECT_EQ(ep->turns.back().role, "generator");
    EXPECT_EQ(ep->generator_turns(), 4);
  }
}

TEST(Vil, RequiresFrozenVerifierAndAuditsErrors) {
  const auto prompts = PromptSet::defaults();
  const auto p = vrtest::make_problem("r", "5");
  vrtest::ScriptedGenerator gen({""});
  vrtest::ScriptedVerifier unfrozen({Verdict::Reject}, "x", false);
  EXPECT_THROW(collect_vil_episode(p, gen, unfrozen, prompts, {}, 0, 1), ConfigError);

  vrtest::ScriptedGenerator flaky({""}, 2);
  vrtest::ScriptedVerifier ver({Verdict::Reject});
  std::vector<VilAuditEntry> audit;
  EXPECT_FALSE(collect_vil_episode(p, flaky, ver, prompts, {}, 3, 1, &audit).has_value());
  ASSERT_EQ(audit.size(), 1u);
  EXPECT_EQ(audit[0].loop_id, 3);
}

TEST(Vil, HygieneDetectsLeaks) {
  const auto prompts = PromptSet::defaults();
  const auto markers = reference_markers(prompts);
  ASSERT_FALSE(markers.empty());
  EXPECT_NE(std::find(markers.begin(), markers.end(), "Reference solution:"), markers.end());
  for (const auto& m : markers) {
    EXPECT_EQ(prompts.get(TemplateId::GeneratorRefine).body().find(m), std::string::npos) << m;
  }

  const auto p = vrtest::make_problem("h", "9137", "Compute 50 + 2.");
  {
    vrtest::ScriptedGenerator gen({"", "9137"});
    vrtest::ScriptedVerifier ver({Verdict::Reject, Verdict::Accept});
    LoopConfig cfg;
    cfg.max_rounds = 3;
    const auto ep = collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1);
    // The generator's own correct answer in later contexts is not a leak.
    EXPECT_TRUE(episode_hygiene_violations(*ep, p, markers).empty());
  }
  {
    vrtest::ScriptedGenerator gen({""});
    vrtest::ScriptedVerifier ver({Verdict::Reject}, "The answer should be 9137.");
    LoopConfig cfg;
    cfg.max_rounds = 2;
    const auto ep = collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1);
    EXPECT_FALSE(episode_hygiene_violations(*ep, p, markers).empty());
  }
  {
    vrtest::ScriptedGenerator gen({""});
    vrtest::ScriptedVerifier ver({Verdict::Reject}, "Reference solution: see above");
    LoopConfig cfg;
    cfg.max_rounds = 1;
    const auto ep = collect_vil_episode(p, gen, ver, prompts, cfg, 0, 1);
    const auto v = episode_hygiene_violations(*ep, p, markers);
    ASSERT_FALSE(v.empty());
    EXPECT_NE(v[0].find("reference-only"), std::string::npos);
  }
}

TEST(Vil, ExportImportRoundTrip) {
  const auto prompts = PromptSet::defaults();
  SimGenerator gen({}, prompts);
  SimVerifier ver({}, prompts);
  LoopConfig cfg;
  cfg.max_rounds = 4;
  std::vector<VilEpisode> eps;
  for (int i = 0; i < 20; ++i) {
    eps.push_back(*collect_vil_episode(vrtest::make_problem("e", "3"), gen, ver, prompts, cfg, i, 2));
  }
  vrtest::TempDir dir;
  export_episodes(eps, dir / "vil.jsonl");
  EXPECT_EQ(import_episodes(dir / "vil.jsonl"), eps);
}

TEST(Vil, EpisodeFromTraceRejectsMismatch) {
  const auto t = vrtest::make_trace("a", 0, {true}, 1, 2);
  EXPECT_THROW(episode_from_trace(t, vrtest::make_problem("b", "1"), PromptSet::defaults(), "v"), Error);
}
