#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "vrloop/dataset.hpp"
#include "vrloop/sim_agents.hpp"

using namespace vrloop;

namespace {

EmbeddingVector ev(std::string id, std::vector<double> v) { return {std::move(id), std::move(v), "test"}; }

class CountingProvider final : public EmbeddingProvider {
 public:
  std::string tag() const override { return "counting"; }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override {
    ++batches;
    embedded += static_cast<int>(texts.size());
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back({static_cast<double>(t.size()), 1.0});
    return out;
  }
  int batches = 0;
  int embedded = 0;
};

}  // namespace

TEST(Binning, BoundariesAreExact) {
  EXPECT_EQ(bin_for({0, 32}), DifficultyBin::Hardest);
  EXPECT_EQ(bin_for({1, 32}), DifficultyBin::Hard);
  EXPECT_EQ(bin_for({6, 32}), DifficultyBin::Hard);
  EXPECT_EQ(bin_for({7, 32}), DifficultyBin::Excluded);
  EXPECT_EQ(bin_for({1, 5}), DifficultyBin::Excluded);  // exactly 0.2
  EXPECT_EQ(bin_for({32, 32}), DifficultyBin::Excluded);
  EXPECT_THROW(bin_for({1, 0}), Error);
}

TEST(Binning, AgreesWithRationalComparisonForAllSmallFractions) {
  for (std::int64_t n = 1; n <= 200; ++n) {
    for (std::int64_t c = 0; c <= n; ++c) {
      const auto expected = c == 0 ? DifficultyBin::Hardest : (5 * c < n ? DifficultyBin::Hard : DifficultyBin::Excluded);
      ASSERT_EQ(bin_for({c, n}), expected) << c << "/" << n;
    }
  }
}

TEST(Binning, MapsEstimates) {
  const auto bins = bin_problems({{"a", {0, 32}}, {"b", {6, 32}}, {"c", {7, 32}}});
  EXPECT_EQ(bins.at("a"), DifficultyBin::Hardest);
  EXPECT_EQ(bins.at("b"), DifficultyBin::Hard);
  EXPECT_EQ(bins.at("c"), DifficultyBin::Excluded);
}

TEST(EstimatePass1, CompleteAndIncompleteRuns) {
  SimGeneratorParams gp;
  gp.solve_prob_unbinned = 0.5;
  SimGenerator gen(gp, PromptSet::defaults());
  const auto p = vrtest::make_problem("e", "3");
  const auto est = estimate_pass1(p, gen, 32, 8);
  EXPECT_EQ(est.completed, 32);
  ASSERT_TRUE(est.estimate.has_value());
  EXPECT_EQ(est.estimate->num, est.correct);
  EXPECT_EQ(est.estimate->den, 32);
  EXPECT_EQ(estimate_pass1(p, gen, 32, 8).correct, est.correct);

  vrtest::ScriptedGenerator flaky({"3"}, 5);
  const auto partial = estimate_pass1(p, flaky, 8, 1);
  EXPECT_EQ(partial.completed, 7);
  EXPECT_FALSE(partial.estimate.has_value());
  EXPECT_TRUE(partial.rollouts[4].error.has_value());
  EXPECT_THROW(estimate_pass1(p, gen, 0, 1), ConfigError);
}

TEST(Cosine, KnownValuesAndErrors) {
  const double u[] = {1, 1};
  const double v[] = {1, 0};
  EXPECT_NEAR(cosine_similarity(u, v), 0.7071067811865475, 1e-15);
  const double w[] = {-2, -2};
  EXPECT_NEAR(cosine_similarity(u, w), -1.0, 1e-15);
  const double z[] = {0, 0};
  EXPECT_THROW(cosine_similarity(u, z), Error);
  const double three[] = {1, 2, 3};
  EXPECT_THROW(cosine_similarity(u, three), Error);
}

TEST(Cosine, ScaleInvarianceProperty) {
  const auto failing = vrtest::for_all_seeds(300, 21, [](std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    std::vector<double> a(16), b(16);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    const double s = cosine_similarity(a, b);
    auto a2 = a;
    const double k = scale(rng);
    for (auto& x : a2) x *= k;
    return s >= -1.0 && s <= 1.0 && std::fabs(s - cosine_similarity(a2, b)) < 1e-12 &&
           std::fabs(s - cosine_similarity(b, a)) < 1e-15;
  });
  EXPECT_FALSE(failing.has_value()) << *failing;
}

TEST(Dedup, StrictThreshold) {
  const auto unit = [](double c) { return std::vector<double>{c, std::sqrt(1.0 - c * c)}; };
  std::map<std::string, EmbeddingVector> emb{
      {"r", ev("r", {1.0, 0.0})},
      {"a", ev("a", unit(0.79))},
      {"b", ev("b", {4.0, 3.0})},  // exactly 0.8
      {"c", ev("c", unit(0.81))},
  };
  const std::vector<Problem> test{vrtest::make_problem("a", "1"), vrtest::make_problem("b", "1"),
                                  vrtest::make_problem("c", "1")};
  const std::vector<Problem> train{vrtest::make_problem("r", "1")};
  const auto res = dedup_test_set(test, train, emb, 0.8);
  ASSERT_EQ(res.removed.size(), 1u);
  EXPECT_EQ(res.removed[0].problem_id, "c");
  EXPECT_EQ(res.removed[0].nearest_train_id, "r");
  EXPECT_NEAR(res.removed[0].similarity, 0.81, 1e-12);
  ASSERT_EQ(res.kept.size(), 2u);
  EXPECT_EQ(res.kept[0].id, "a");
  EXPECT_EQ(res.kept[1].id, "b");
}

TEST(Dedup, MissingEmbeddingsListEveryId) {
  std::map<std::string, EmbeddingVector> emb{{"a", ev("a", {1, 0})}};
  const std::vector<Problem> test{vrtest::make_problem("a", "1"), vrtest::make_problem("b", "1")};
  const std::vector<Problem> train{vrtest::make_problem("r", "1")};
  try {
    dedup_test_set(test, train, emb);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("b"), std::string::npos);
    EXPECT_NE(msg.find("r"), std::string::npos);
  }
}

TEST(Dedup, BruteForceOracleProperty) {
  const auto failing = vrtest::for_all_seeds(60, 99, [](std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<Problem> test;
    std::vector<Problem> train;
    std::map<std::string, EmbeddingVector> emb;
    for (int i = 0; i < 12; ++i) {
      test.push_back(vrtest::make_problem("t" + std::to_string(i), "1"));
      train.push_back(vrtest::make_problem("r" + std::to_string(i), "1"));
    }
    for (const auto* set : {&test, &train}) {
      for (const auto& p : *set) emb.emplace(p.id, ev(p.id, {g(rng), g(rng), g(rng)}));
    }
    const auto res = dedup_test_set(test, train, emb, 0.8);
    std::set<std::string> removed;
    for (const auto& r : res.removed) removed.insert(r.problem_id);
    for (const auto& t : test) {
      bool near = false;
      for (const auto& r : train) {
        const auto& a = emb.at(t.id).vector;
        const auto& b = emb.at(r.id).vector;
        const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
        near = near || dot / (na * nb) > 0.8;
      }
      if (near != (removed.count(t.id) == 1)) return false;
    }
    return res.kept.size() + res.removed.size() == test.size();
  });
  EXPECT_FALSE(failing.has_value()) << *failing;
}

TEST(EmbeddingCache, RoundTripAndReuse) {
  vrtest::TempDir dir;
  const auto path = dir / "emb.bin";
  const std::vector<Problem> probs{vrtest::make_problem("a", "1", "short"),
                                   vrtest::make_problem("b", "1", "a longer statement")};
  CountingProvider provider;
  {
    EmbeddingCache cache(path);
    const auto out = embed_problems(probs, provider, &cache, 1);
    EXPECT_EQ(provider.embedded, 2);
    EXPECT_EQ(provider.batches, 2);
    EXPECT_EQ(out.at("b").vector[0], 18.0);
  }
  EmbeddingCache reopened(path);
  EXPECT_EQ(reopened.size(), 2u);
  const auto hit = reopened.find("counting", "a");
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ(hit->vector, (std::vector<double>{5.0, 1.0}));
  EXPECT_FALSE(reopened.find("other", "a").has_value());
  const auto out = embed_problems(probs, provider, &reopened);
  EXPECT_EQ(provider.embedded, 2);  // nothing re-embedded
  EXPECT_EQ(out.size(), 2u);
}

TEST(EmbeddingCache, RejectsCorruptFiles) {
  vrtest::TempDir dir;
  std::ofstream(dir / "bad.bin", std::ios::binary) << "NOTMAGIC";
  EXPECT_THROW(EmbeddingCache(dir / "bad.bin"), SchemaError);
  {
    EmbeddingCache cache(dir / "ok.bin");
    cache.put(ev("x", {1.0, 2.0, 3.0}));
    cache.save();
  }
  std::filesystem::resize_file(dir / "ok.bin", std::filesystem::file_size(dir / "ok.bin") - 4);
  EXPECT_THROW(EmbeddingCache(dir / "ok.bin"), SchemaError);
}

TEST(HashedEmbedding, DeterministicAndSimilarityOrdered) {
  HashedEmbeddingProvider h(128);
  EXPECT_EQ(h.tag(), "hashed-bow-128");
  const std::string texts[] = {"Find the sum of the first ten primes.", "Find the sum of the first ten primes!",
                               "A train leaves the station at noon."};
  const auto a = h.embed(texts);
  const auto b = h.embed(texts);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a[0].size(), 128u);
  EXPECT_GT(cosine_similarity(a[0], a[1]), 0.95);
  EXPECT_LT(cosine_similarity(a[0], a[2]), 0.5);
}

TEST(ProblemFiles, RoundTripAndValidation) {
  vrtest::TempDir dir;
  auto p = vrtest::make_problem("a", "\\frac{1}{2}", "Line one\nline \"two\"");
  p.bin = DifficultyBin::Hard;
  p.pass1_estimate = Rational{3, 32};
  p.source = "unit";
  save_problems_jsonl({p, vrtest::make_problem("b", "2")}, dir / "p.jsonl");
  const auto back = load_problems_jsonl(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], p);

  std::ofstream(dir / "bad.jsonl") << "# comment\n\n{\"id\":\"x\",\"statement\":\"s\",\"gold_answer\":\"1\","
                                      "\"bin\":\"hardest\",\"pass1_estimate\":{\"num\":1,\"den\":32}}\n";
  EXPECT_THROW(load_problems_jsonl(dir / "bad.jsonl"), SchemaError);
  EXPECT_THROW(load_problems_jsonl(dir / "absent.jsonl"), IoError);
}

TEST(ProblemFiles, EmbeddingsJsonl) {
  vrtest::TempDir dir;
  std::ofstream(dir / "e.jsonl") << "{\"id\":\"a\",\"vector\":[1,0]}\n{\"id\":\"b\",\"vector\":[0,1]}\n";
  const auto e = load_embeddings_jsonl(dir / "e.jsonl");
  EXPECT_EQ(e.at("b").vector, (std::vector<double>{0.0, 1.0}));
  std::ofstream(dir / "x.jsonl") << "{\"id\":\"a\",\"vector\":[1,0]}\n{\"id\":\"b\",\"vector\":[0,1,2]}\n";
  EXPECT_THROW(load_embeddings_jsonl(dir / "x.jsonl"), SchemaError);
}
