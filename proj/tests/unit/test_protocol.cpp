#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_support.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/seed.hpp"
#include "vrloop/serialize.hpp"

using namespace vrloop;

TEST(ParseVerdict, CanonicalLines) {
  const auto a = parse_verdict("Looks fine.\nPredicted verdict: CORRECT");
  EXPECT_EQ(a.verdict, Verdict::Accept);
  EXPECT_EQ(a.feedback, "Looks fine.");
  const auto r = parse_verdict("Step 2 drops a sign.\nPredicted verdict: INCORRECT\n");
  EXPECT_EQ(r.verdict, Verdict::Reject);
  EXPECT_EQ(r.feedback, "Step 2 drops a sign.");
}

TEST(ParseVerdict, TolerantFormatting) {
  EXPECT_EQ(parse_verdict("verdict: correct").verdict, Verdict::Accept);
  EXPECT_EQ(parse_verdict("**Verdict:** `INCORRECT`").verdict, Verdict::Reject);
  EXPECT_EQ(parse_verdict("Predicted Verdict = \\texttt{CORRECT}").verdict, Verdict::Accept);
  EXPECT_EQ(parse_verdict("final verdict is Incorrect.").verdict, Verdict::Reject);
}

TEST(ParseVerdict, LastVerdictWins) {
  const auto out = parse_verdict("Predicted verdict: CORRECT\nOn reflection...\nPredicted verdict: INCORRECT");
  EXPECT_EQ(out.verdict, Verdict::Reject);
  EXPECT_EQ(out.feedback, "On reflection...");
}

TEST(ParseVerdict, MissingVerdictRejectsWithWholeReply) {
  const std::string raw = "  I am not sure what to say.\nScore: 0.9  ";
  const auto out = parse_verdict(raw);
  EXPECT_EQ(out.verdict, Verdict::Reject);
  EXPECT_EQ(out.feedback, "I am not sure what to say.\nScore: 0.9");
  EXPECT_FALSE(out.score.has_value());
  EXPECT_EQ(out.raw, raw);
  EXPECT_EQ(parse_verdict("").verdict, Verdict::Reject);
}

TEST(ParseVerdict, ScoreLine) {
  const auto out = parse_verdict("Fine.\nScore: 0.75\nPredicted verdict: CORRECT");
  ASSERT_TRUE(out.score.has_value());
  EXPECT_DOUBLE_EQ(*out.score, 0.75);
  EXPECT_EQ(out.feedback, "Fine.");
  // Out-of-range scores stay in the feedback.
  const auto bad = parse_verdict("Score: 7\nPredicted verdict: CORRECT");
  EXPECT_FALSE(bad.score.has_value());
  EXPECT_EQ(bad.feedback, "Score: 7");
}

TEST(ParseVerdict, TotalOnArbitraryBytes) {
  const auto failing = vrtest::for_all_seeds(300, 17, [](std::mt19937_64& rng) {
    std::uniform_int_distribution<int> len(0, 200);
    std::uniform_int_distribution<int> byte(0, 255);
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    for (auto& c : s) c = static_cast<char>(byte(rng));
    const auto out = parse_verdict(s);
    return out.raw == s;
  });
  EXPECT_FALSE(failing.has_value()) << *failing;
}

TEST(ExtractAnswer, BoxedAndFallbacks) {
  EXPECT_EQ(extract_answer("so \\boxed{42}."), "42");
  EXPECT_EQ(extract_answer("\\boxed{1} then \\boxed{\\frac{1}{2}}"), "\\frac{1}{2}");
  EXPECT_EQ(extract_answer("\\fbox{ 7 }"), "7");
  EXPECT_EQ(extract_answer("Work.\nFinal answer: 12."), "12");
  EXPECT_EQ(extract_answer("The final answer is $3/4$"), "3/4");
  EXPECT_FALSE(extract_answer("no answer here").has_value());
  EXPECT_FALSE(extract_answer("\\boxed{").has_value());
}

TEST(ExtractAnswer, CustomPattern) {
  ExtractOptions opt;
  opt.final_answer_pattern = R"(answer\s*=>\s*(\S+))";
  EXPECT_EQ(extract_answer("answer => 9", opt), "9");
}

TEST(NormalizeAnswer, Forms) {
  EXPECT_EQ(normalize_answer(" $\\boxed{ 12 }$ "), "12");
  EXPECT_EQ(normalize_answer("\\text{12.50}"), "12.5");
  EXPECT_EQ(normalize_answer("007"), "7");
  EXPECT_EQ(normalize_answer("-0.0"), "0");
  EXPECT_EQ(normalize_answer("\\dfrac{1}{2}"), "\\frac{1}{2}");
  EXPECT_EQ(normalize_answer("\\left( 1, 2 \\right)"), "(1,2)");
}

TEST(AnswerChecker, Equivalence) {
  EXPECT_TRUE(answers_equivalent("0.5", "\\frac{1}{2}"));
  EXPECT_TRUE(answers_equivalent("1/4", "0.25"));
  EXPECT_TRUE(answers_equivalent("1e3", "1000"));
  EXPECT_TRUE(answers_equivalent("-\\frac{3}{4}", "-0.75"));
  EXPECT_TRUE(answers_equivalent("x+1", " x + 1 "));
  EXPECT_FALSE(answers_equivalent("1/0", "1/0.0"));
  EXPECT_FALSE(answers_equivalent("", ""));
  EXPECT_FALSE(answers_equivalent("0.5", "0.5000001"));
  EXPECT_FALSE(is_correct(std::nullopt, "1"));
  EXPECT_TRUE(is_correct(std::string("2"), "2.0"));
}

TEST(AnswerChecker, NumericRelativeToleranceProperty) {
  const auto failing = vrtest::for_all_seeds(500, 3, [](std::mt19937_64& rng) {
    std::uniform_int_distribution<int> num(-100000, 100000);
    std::uniform_int_distribution<int> den(1, 999);
    const int a = num(rng);
    const int b = den(rng);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(a) / b);
    const std::string frac = std::to_string(a) + "/" + std::to_string(b);
    return answers_equivalent(frac, buf) && answers_equivalent(buf, frac);
  });
  EXPECT_FALSE(failing.has_value()) << *failing;
}

TEST(PromptTemplate, RenderAndSections) {
  PromptTemplate t(TemplateId::GeneratorRefine, "P={{statement}}{{#feedback}} F={{feedback}}{{/feedback}}.");
  EXPECT_EQ(t.render({{"statement", "x"}}), "P=x.");
  EXPECT_EQ(t.render({{"statement", "x"}, {"feedback", ""}}), "P=x.");
  EXPECT_EQ(t.render({{"statement", "x"}, {"feedback", "bad"}}), "P=x F=bad.");
  EXPECT_EQ(t.required_slots(), std::vector<std::string>{"statement"});
  EXPECT_TRUE(t.mentions("feedback"));
  EXPECT_THROW(t.render({}), ConfigError);
}

TEST(PromptTemplate, StructuralErrors) {
  EXPECT_THROW(PromptTemplate(TemplateId::GeneratorInitial, "{{statement"), ConfigError);
  EXPECT_THROW(PromptTemplate(TemplateId::GeneratorInitial, "{{nope}}"), ConfigError);
  EXPECT_THROW(PromptTemplate(TemplateId::GeneratorInitial, "{{#feedback}}x"), ConfigError);
  EXPECT_THROW(PromptTemplate(TemplateId::GeneratorInitial, "{{/feedback}}"), ConfigError);
  EXPECT_THROW(PromptTemplate(TemplateId::GeneratorInitial, "{{}}"), ConfigError);
}

TEST(PromptTemplate, ReferenceSlotConfinedToTeacher) {
  EXPECT_THROW(PromptTemplate(TemplateId::VerifierTeacher, "{{statement}}"), ConfigError);
  EXPECT_THROW(PromptTemplate(TemplateId::VerifierTeacher, "{{#reference_solution}}{{reference_solution}}{{/reference_solution}}"),
               ConfigError);
  EXPECT_NO_THROW(PromptTemplate(TemplateId::VerifierTeacher, "{{reference_solution}}"));
  for (auto id : {TemplateId::GeneratorInitial, TemplateId::GeneratorRefine, TemplateId::VerifierPlain}) {
    EXPECT_THROW(PromptTemplate(id, "{{reference_solution}}"), ConfigError);
  }
}

TEST(PromptSet, DefaultsAndDirectoryOverride) {
  const auto defaults = PromptSet::defaults();
  const auto msgs = render_prompt(defaults, TemplateId::GeneratorInitial, {{"statement", "What is 1+1?"}});
  ASSERT_EQ(msgs.size(), 1u);
  EXPECT_EQ(msgs[0].role, "user");
  EXPECT_NE(msgs[0].content.find("What is 1+1?"), std::string::npos);

  vrtest::TempDir dir;
  std::ofstream(dir / "generator_initial.txt") << "Q: {{statement}}";
  const auto loaded = PromptSet::load_dir(dir.path());
  EXPECT_EQ(loaded.get(TemplateId::GeneratorInitial).render({{"statement", "s"}}), "Q: s");
  EXPECT_EQ(loaded.get(TemplateId::VerifierPlain).body(), defaults.get(TemplateId::VerifierPlain).body());
  EXPECT_THROW(PromptSet::load_dir(dir / "missing"), ConfigError);
  std::ofstream(dir / "verifier_teacher.txt") << "no reference here {{statement}}";
  EXPECT_THROW(PromptSet::load_dir(dir.path()), ConfigError);
}

TEST(Seeds, PureFunctionOfCoordinates) {
  const auto a = derive_seed(1, "p1", 2, 3, SeedRole::Generator);
  EXPECT_EQ(a, derive_seed(1, "p1", 2, 3, SeedRole::Generator));
  std::set<std::uint64_t> seen{a, derive_seed(2, "p1", 2, 3, SeedRole::Generator),
                               derive_seed(1, "p2", 2, 3, SeedRole::Generator),
                               derive_seed(1, "p1", 3, 3, SeedRole::Generator),
                               derive_seed(1, "p1", 2, 4, SeedRole::Generator),
                               derive_seed(1, "p1", 2, 3, SeedRole::Verifier)};
  EXPECT_EQ(seen.size(), 6u);
  // Id/loop boundaries are not ambiguous.
  EXPECT_NE(derive_seed(0, "p1", 12, 0, SeedRole::Generator), derive_seed(0, "p11", 2, 0, SeedRole::Generator));
}

TEST(Seeds, RngUniformAndBelow) {
  Rng rng(5);
  double sum = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) ++hist[rng.below(7)];
  for (int h : hist) EXPECT_NEAR(h, 1000, 150);
}

TEST(Types, EnumNamesRoundTrip) {
  for (auto v : {Verdict::Accept, Verdict::Reject}) EXPECT_EQ(parse_verdict_name(to_string(v)), v);
  for (auto v : {Termination::Accepted, Termination::MaxRounds, Termination::Error})
    EXPECT_EQ(parse_termination(to_string(v)), v);
  for (auto v : {DifficultyBin::Hardest, DifficultyBin::Hard, DifficultyBin::Excluded})
    EXPECT_EQ(parse_bin(to_string(v)), v);
  for (auto v : {FeedbackMode::Model, FeedbackMode::Generic, FeedbackMode::None})
    EXPECT_EQ(parse_feedback_mode(to_string(v)), v);
  EXPECT_THROW(parse_bin("medium"), SchemaError);
}

TEST(Types, ProblemValidation) {
  auto p = vrtest::make_problem("a", "1");
  EXPECT_NO_THROW(validate(p));
  p.bin = DifficultyBin::Hardest;
  p.pass1_estimate = Rational{1, 32};
  EXPECT_THROW(validate(p), SchemaError);
  p.pass1_estimate = Rational{0, 32};
  EXPECT_NO_THROW(validate(p));
  p.bin = DifficultyBin::Hard;
  EXPECT_THROW(validate(p), SchemaError);
  p.id.clear();
  EXPECT_THROW(validate(p), SchemaError);
  LoopConfig cfg;
  cfg.max_rounds = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TokenDist, FromLogprobsAndValidation) {
  const auto d = TokenDist::from_logprobs(0, "a", std::log(0.5), {{"a", std::log(0.5)}, {"b", std::log(0.3)}});
  EXPECT_NEAR(d.listed_mass(), 0.8, 1e-12);
  EXPECT_NEAR(d.tail_mass, 0.2, 1e-12);
  EXPECT_NO_THROW(d.validate());
  // Listed mass above one is renormalized away.
  const auto over = TokenDist::from_logprobs(0, "a", std::log(0.7), {{"a", std::log(0.7)}, {"b", std::log(0.4)}});
  EXPECT_NEAR(over.listed_mass() + over.tail_mass, 1.0, 1e-12);
  EXPECT_GE(over.tail_mass, 0.0);
  auto broken = d;
  broken.tail_mass = 0.5;
  EXPECT_THROW(broken.validate(), SchemaError);
  broken = d;
  broken.alternatives[1].logprob = 0.1;
  EXPECT_THROW(broken.validate(), SchemaError);
}

TEST(Serialize, TraceRoundTripIsByteStable) {
  auto t = vrtest::make_trace("p", 3, {false, true}, 2, 4, 0.25);
  t.seed = 0xFFFFFFFFFFFFFFFFULL;
  t.usage.push_back({"generator", 0, {10, 20, 0.0}});
  t.rounds[0].verifier_output->feedback = "line1\n\"quoted\" \xE2\x9C\x93";
  const auto line = trace_line(t);
  const auto back = trace_from_json(json::parse(line));
  EXPECT_EQ(back, t);
  EXPECT_EQ(trace_line(back), line);
  auto j = trace_to_json(t);
  EXPECT_EQ(j.at("schema"), std::string(kTraceSchema));
  j["schema_version"] = 99;
  EXPECT_THROW(trace_from_json(j), SchemaError);
}

TEST(Jsonl, AppendReadAndTornTail) {
  vrtest::TempDir dir;
  const auto path = dir / "x.jsonl";
  {
    JsonlAppender app(path);
    app.append(json{{"a", 1}});
    app.append(json{{"a", 2}});
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"a\": 3";  // crash mid-write
  }
  const auto read = read_jsonl(path);
  EXPECT_TRUE(read.torn_tail);
  ASSERT_EQ(read.records.size(), 2u);
  {
    JsonlAppender app(path);  // truncates the torn line
    app.append(json{{"a", 4}});
  }
  const auto again = read_jsonl(path);
  EXPECT_FALSE(again.torn_tail);
  ASSERT_EQ(again.records.size(), 3u);
  EXPECT_EQ(again.records[2]["a"], 4);

  std::ofstream(dir / "bad.jsonl") << "{\"a\":1}\nnot json\n{\"a\":2}\n";
  EXPECT_THROW(read_jsonl(dir / "bad.jsonl"), SchemaError);
}

TEST(Jsonl, ExportHeaderAndAtomicRename) {
  vrtest::TempDir dir;
  const auto path = dir / "e.jsonl";
  write_jsonl_export(path, export_header("demo", 1), {json{{"x", 1}}});
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".partial"));
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  EXPECT_TRUE(is_export_header(json::parse(first)));
  const auto read = read_jsonl(path);
  ASSERT_EQ(read.records.size(), 1u);
  EXPECT_EQ(read.records[0]["x"], 1);
}
