#include "vrloop/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vrloop/errors.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/seed.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

Pass1Estimate estimate_pass1(const Problem& problem, GeneratorAgent& generator, int n, std::uint64_t seed,
                             const AnswerChecker& checker) {
  if (n < 1) throw ConfigError("estimate_pass1: n must be >= 1");
  Pass1Estimate est;
  est.problem_id = problem.id;
  est.requested = n;
  for (int i = 0; i < n; ++i) {
    RolloutRecord rec;
    rec.rollout = i;
    try {
      auto reply = generator.generate_initial(problem, {derive_seed(seed, problem.id, i, 0, SeedRole::Rollout), 0});
      rec.extracted_answer = reply.attempt.extracted_answer;
      rec.correct = is_correct(reply.attempt.extracted_answer, problem.gold_answer, checker);
      ++est.completed;
      if (*rec.correct) ++est.correct;
    } catch (const TransportError& e) {
      rec.error = e.what();
    }
    est.rollouts.push_back(std::move(rec));
  }
  if (est.completed == n) est.estimate = Rational{est.correct, n};
  return est;
}

DifficultyBin bin_for(const Rational& pass1) {
  if (pass1.den <= 0) throw Error("bin_for: non-positive denominator");
  if (pass1.num == 0) return DifficultyBin::Hardest;
  // c/n < 1/5  <=>  5c < n
  if (pass1.num > 0 && 5 * pass1.num < pass1.den) return DifficultyBin::Hard;
  return DifficultyBin::Excluded;
}

std::map<std::string, DifficultyBin> bin_problems(const std::map<std::string, Rational>& estimates) {
  std::map<std::string, DifficultyBin> out;
  for (const auto& [id, est] : estimates) out.emplace(id, bin_for(est));
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                std::to_string(v.size()) + ")");
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error("cosine_similarity: zero-norm vector");
  const double c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return std::clamp(c, -1.0, 1.0);
}

DedupResult dedup_test_set(const std::vector<Problem>& test, const std::vector<Problem>& train,
                           const std::map<std::string, EmbeddingVector>& embeddings, double threshold) {
  std::vector<std::string> missing;
  for (const auto* set : {&test, &train}) {
    for (const auto& p : *set) {
      if (embeddings.find(p.id) == embeddings.end()) missing.push_back(p.id);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing embeddings for " + std::to_string(missing.size()) + " problem(s):";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }

  DedupResult result;
  for (const auto& t : test) {
    const auto& tv = embeddings.at(t.id).vector;
    double best = -2.0;
    std::string best_id;
    for (const auto& r : train) {
      const double s = cosine_similarity(tv, embeddings.at(r.id).vector);
      if (s > best) {
        best = s;
        best_id = r.id;
      }
    }
    if (!best_id.empty() && best > threshold) {
      result.removed.push_back({t.id, best_id, best});
    } else {
      result.kept.push_back(t);
    }
  }
  return result;
}

namespace {

constexpr char kCacheMagic[8] = {'V', 'R', 'L', 'E', 'M', 'B', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw SchemaError("embedding cache: truncated record");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw SchemaError("embedding cache: truncated vector");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string read_bytes(std::istream& in, std::uint32_t n) {
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw SchemaError("embedding cache: truncated string");
  return s;
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    throw SchemaError("embedding cache " + path_.string() + ": bad magic");
  }
  while (in.peek() != std::char_traits<char>::eof()) {
    EmbeddingVector e;
    e.provider = read_bytes(in, read_u32(in));
    e.problem_id = read_bytes(in, read_u32(in));
    const auto dim = read_u32(in);
    e.vector.reserve(dim);
    for (std::uint32_t i = 0; i < dim; ++i) e.vector.push_back(read_f64(in));
    auto key = std::make_pair(e.provider, e.problem_id);
    entries_.insert_or_assign(std::move(key), std::move(e));
  }
}

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& provider, const std::string& problem_id) const {
  const auto it = entries_.find({provider, problem_id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(EmbeddingVector embedding) {
  auto key = std::make_pair(embedding.provider, embedding.problem_id);
  entries_.insert_or_assign(std::move(key), std::move(embedding));
}

void EmbeddingCache::save() const {
  const auto tmp = path_.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embedding cache " + tmp);
    out.write(kCacheMagic, 8);
    for (const auto& [key, e] : entries_) {
      write_u32(out, static_cast<std::uint32_t>(e.provider.size()));
      out.write(e.provider.data(), static_cast<std::streamsize>(e.provider.size()));
      write_u32(out, static_cast<std::uint32_t>(e.problem_id.size()));
      out.write(e.problem_id.data(), static_cast<std::streamsize>(e.problem_id.size()));
      write_u32(out, static_cast<std::uint32_t>(e.vector.size()));
      for (double x : e.vector) write_f64(out, x);
    }
    if (!out.flush()) throw IoError("failed writing embedding cache " + tmp);
  }
  std::filesystem::rename(tmp, path_);
}

std::map<std::string, EmbeddingVector> embed_problems(const std::vector<Problem>& problems,
                                                      EmbeddingProvider& provider, EmbeddingCache* cache,
                                                      std::size_t batch_size) {
  std::map<std::string, EmbeddingVector> out;
  std::vector<const Problem*> todo;
  const auto tag = provider.tag();
  for (const auto& p : problems) {
    if (cache) {
      if (auto hit = cache->find(tag, p.id)) {
        out.emplace(p.id, std::move(*hit));
        continue;
      }
    }
    todo.push_back(&p);
  }
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < todo.size(); start += batch_size) {
    const auto end = std::min(todo.size(), start + batch_size);
    std::vector<std::string> texts;
    for (auto i = start; i < end; ++i) texts.push_back(todo[i]->statement);
    auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) throw Error("embedding provider returned a short batch");
    for (auto i = start; i < end; ++i) {
      EmbeddingVector e{todo[i]->id, std::move(vectors[i - start]), tag};
      if (cache) cache->put(e);
      out.insert_or_assign(e.problem_id, std::move(e));
    }
  }
  if (cache && !todo.empty()) cache->save();

  std::size_t dim = 0;
  for (const auto& [id, e] : out) {
    if (dim == 0) dim = e.dimension();
    if (e.dimension() != dim) throw Error("embedding dimension differs for problem " + id);
  }
  return out;
}

std::vector<std::vector<double>> HashedEmbeddingProvider::embed(std::span<const std::string> texts) {
  if (dim_ == 0) throw ConfigError("hashed embedding dimension must be >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<std::string> words;
    std::string cur;
    for (const char ch : text) {
      const auto c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        cur.push_back(static_cast<char>(std::tolower(c)));
      } else if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    std::vector<double> v(dim_, 0.0);
    const auto add = [&](const std::string& feature) {
      const auto h = mix64(fnv1a64(feature));
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    };
    for (std::size_t i = 0; i < words.size(); ++i) {
      add(words[i]);
      if (i + 1 < words.size()) add(words[i] + ' ' + words[i + 1]);
    }
    // Keeps empty statements away from the zero vector.
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Problem> load_problems_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open problem file " + path.string());
  std::vector<Problem> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') continue;
    try {
      const auto j = json::parse(line);
      if (is_export_header(j)) continue;
      auto p = j.get<Problem>();
      validate(p);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_problems_jsonl(const std::vector<Problem>& problems, const std::filesystem::path& path) {
  std::vector<json> rows(problems.begin(), problems.end());
  write_jsonl_export(path, export_header("vrloop.problem", 1), rows);
}

std::map<std::string, EmbeddingVector> load_embeddings_jsonl(const std::filesystem::path& path,
                                                             const std::string& provider) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file " + path.string());
  std::map<std::string, EmbeddingVector> out;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingVector e;
      e.problem_id = j.at("id").get<std::string>();
      e.vector = j.at("vector").get<std::vector<double>>();
      e.provider = j.value("provider", provider);
      if (dim == 0) dim = e.dimension();
      if (e.dimension() != dim || dim == 0) throw SchemaError("inconsistent embedding dimension");
      out.insert_or_assign(e.problem_id, std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace vrloop
