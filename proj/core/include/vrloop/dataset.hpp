#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vrloop/agents.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

struct RolloutRecord {
  int rollout = 0;
  std::optional<bool> correct;  // absent when the call failed
  std::optional<std::string> extracted_answer;
  std::optional<std::string> error;
};

struct Pass1Estimate {
  std::string problem_id;
  int requested = 0;
  int completed = 0;
  int correct = 0;
  // c / n; present only when all n rollouts completed.
  std::optional<Rational> estimate;
  std::vector<RolloutRecord> rollouts;
};

// n independent round-0 generations, each answer-checked. Failed rollouts
// are recorded; with any failure the estimate is withheld (incomplete run).
Pass1Estimate estimate_pass1(const Problem& problem, GeneratorAgent& generator, int n, std::uint64_t seed,
                             const AnswerChecker& checker = default_answer_checker());

// 0 -> Hardest; (0, 0.2) -> Hard; >= 0.2 -> Excluded. Exact on rationals.
DifficultyBin bin_for(const Rational& pass1);
std::map<std::string, DifficultyBin> bin_problems(const std::map<std::string, Rational>& estimates);

struct EmbeddingVector {
  std::string problem_id;
  std::vector<double> vector;
  std::string provider;

  std::size_t dimension() const { return vector.size(); }
};

// Throws Error on dimension mismatch or a zero-norm argument.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct RemovedProblem {
  std::string problem_id;
  std::string nearest_train_id;
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<Problem> kept;
  std::vector<RemovedProblem> removed;
};

// Removes test problems whose cosine similarity to any training problem is
// strictly greater than `threshold`. Missing embeddings are a hard error
// listing every missing id.
DedupResult dedup_test_set(const std::vector<Problem>& test, const std::vector<Problem>& train,
                           const std::map<std::string, EmbeddingVector>& embeddings, double threshold = 0.8);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string tag() const = 0;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
};

// Binary sidecar cache keyed by (provider, problem id). Layout: magic
// "VRLEMB01", then repeated records of
//   u32 provider_len, provider bytes, u32 id_len, id bytes, u32 dim, dim x f64
// all little-endian.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  std::optional<EmbeddingVector> find(const std::string& provider, const std::string& problem_id) const;
  void put(EmbeddingVector embedding);
  void save() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::filesystem::path path_;
  std::map<std::pair<std::string, std::string>, EmbeddingVector> entries_;
};

// Embeds every problem statement not already cached; returns id -> vector.
std::map<std::string, EmbeddingVector> embed_problems(const std::vector<Problem>& problems,
                                                      EmbeddingProvider& provider, EmbeddingCache* cache,
                                                      std::size_t batch_size = 64);

// Reads precomputed vectors from JSONL lines {"id": ..., "vector": [...]}.
// Deterministic offline embedding: signed feature hashing of lowercase
// word unigrams and bigrams into `dim` buckets.
class HashedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashedEmbeddingProvider(std::size_t dim = 256) : dim_(dim) {}
  std::string tag() const override { return "hashed-bow-" + std::to_string(dim_); }
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
};

// One Problem object per line; blank lines and '#' comments are skipped.
std::vector<Problem> load_problems_jsonl(const std::filesystem::path& path);
void save_problems_jsonl(const std::vector<Problem>& problems, const std::filesystem::path& path);

std::map<std::string, EmbeddingVector> load_embeddings_jsonl(const std::filesystem::path& path,
                                                             const std::string& provider = "file");

}  // namespace vrloop
