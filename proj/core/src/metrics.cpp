#include "vrloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "vrloop/errors.hpp"
#include "vrloop/loop.hpp"
#include "vrloop/seed.hpp"
#include "vrloop/serialize.hpp"

namespace vrloop {

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string{}; }

double standard_error(double p, std::size_t n) {
  return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

bool correct_at(const VRTrace& t, int r) {
  if (t.rounds.empty()) return false;
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(r), t.rounds.size() - 1);
  return t.rounds[idx].attempt.correct.value_or(false);
}

void require_rounds(std::span<const VRTrace> traces, int r) {
  if (traces.empty()) throw Error("empty trace set");
  if (r < 0) throw Error("round must be >= 0");
  for (const auto& t : traces) {
    if (t.max_rounds < r) {
      throw Error("trace " + t.problem_id + "#" + std::to_string(t.loop_id) + " has max_rounds " +
                  std::to_string(t.max_rounds) + " < " + std::to_string(r));
    }
  }
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n) {
    throw Error("pass_at_k: need 0 <= c <= n and 1 <= k <= n (got n=" + std::to_string(n) +
                " c=" + std::to_string(c) + " k=" + std::to_string(k) + ")");
  }
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

double round_pass1(std::span<const VRTrace> traces, int r) {
  require_rounds(traces, r);
  std::size_t hits = 0;
  for (const auto& t : traces) hits += correct_at(t, r) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(traces.size());
}

double pass_at_k_per_round(std::span<const VRTrace> traces, int r, int k) {
  require_rounds(traces, r);
  std::map<std::string, std::pair<int, int>> groups;  // problem -> (n, c)
  for (const auto& t : traces) {
    auto& g = groups[t.problem_id];
    ++g.first;
    if (correct_at(t, r)) ++g.second;
  }
  const int n = groups.begin()->second.first;
  double sum = 0.0;
  for (const auto& [id, g] : groups) {
    if (g.first != n) {
      throw Error("pass_at_k_per_round: problem " + id + " has " + std::to_string(g.first) + " loops, expected " +
                  std::to_string(n));
    }
    sum += pass_at_k(g.first, g.second, k);
  }
  return sum / static_cast<double>(groups.size());
}

std::vector<FrontierPoint> precision_coverage(std::span<const VRTrace> traces, int max_rounds) {
  std::vector<FrontierPoint> out;
  for (int t = 1; t <= max_rounds; ++t) {
    FrontierPoint p;
    p.round = t;
    p.total = traces.size();
    for (const auto& tr : traces) {
      const auto acc = tr.accepting_round();
      if (acc && *acc <= t) {
        ++p.accepted;
        if (tr.rounds[static_cast<std::size_t>(*acc - 1)].attempt.correct.value_or(false)) ++p.accepted_correct;
      }
    }
    p.coverage = p.total ? static_cast<double>(p.accepted) / static_cast<double>(p.total) : 0.0;
    if (p.accepted > 0) p.precision = static_cast<double>(p.accepted_correct) / static_cast<double>(p.accepted);
    out.push_back(p);
  }
  return out;
}

ScoreAccuracySeries score_accuracy_series(std::span<const VRTrace> traces, int max_rounds,
                                          std::string score_source) {
  ScoreAccuracySeries series;
  series.score_source = std::move(score_source);
  std::vector<const VRTrace*> scored;
  for (const auto& t : traces) {
    const bool any = std::any_of(t.rounds.begin(), t.rounds.end(), [](const RoundRecord& r) {
      return r.verifier_output && r.verifier_output->score.has_value();
    });
    if (any) {
      scored.push_back(&t);
    } else {
      series.excluded.push_back(t.problem_id + "#" + std::to_string(t.loop_id));
    }
  }
  if (scored.empty()) throw Error("score_accuracy_series: no trace carries a verifier score");
  for (int r = 1; r <= max_rounds; ++r) {
    ScoreAccuracyPoint p;
    p.round = r;
    double sum = 0.0;
    std::size_t hits = 0;
    for (const auto* t : scored) {
      if (correct_at(*t, r)) ++hits;
      const auto idx = static_cast<std::size_t>(r - 1);
      if (idx < t->rounds.size() && t->rounds[idx].verifier_output && t->rounds[idx].verifier_output->score) {
        sum += *t->rounds[idx].verifier_output->score;
        ++p.scored;
      }
    }
    if (p.scored > 0) p.mean_score = sum / static_cast<double>(p.scored);
    p.pass1 = static_cast<double>(hits) / static_cast<double>(scored.size());
    series.points.push_back(p);
  }
  return series;
}

BonRun run_bon(const Problem& problem, GeneratorAgent& generator, VerifierAgent& verifier, int n, int loop_id,
               std::uint64_t seed, const AnswerChecker& checker) {
  if (n < 1) throw ConfigError("best-of-n needs N >= 1");
  BonRun run;
  run.problem_id = problem.id;
  run.loop_id = loop_id;
  run.seed = seed;
  run.requested = n;
  for (int i = 0; i < n; ++i) {
    try {
      BonSample s;
      auto g = generator.generate_initial(problem, {derive_seed(seed, problem.id, loop_id, i, SeedRole::Generator), 0});
      s.attempt = std::move(g.attempt);
      s.attempt.round_index = 0;
      s.attempt.correct = is_correct(s.attempt.extracted_answer, problem.gold_answer, checker);
      s.generator_usage = g.usage;
      auto v = verifier.verify(problem, s.attempt, VerifyMode::Plain,
                               {derive_seed(seed, problem.id, loop_id, i + 1, SeedRole::Verifier), 1});
      s.verdict = std::move(v.output);
      s.verifier_usage = v.usage;
      run.samples.push_back(std::move(s));
    } catch (const TransportError& e) {
      run.errors.push_back("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return run;
}

BonSelection bon_select(const BonRun& run, int n) {
  if (n < 1) throw Error("bon_select: n must be >= 1");
  const auto avail = std::min<std::size_t>(static_cast<std::size_t>(n), run.samples.size());
  BonSelection sel;
  if (avail == 0) return sel;
  std::vector<int> accepted;
  for (std::size_t i = 0; i < avail; ++i) {
    const auto& v = run.samples[i].verdict;
    if (v && v->verdict == Verdict::Accept) accepted.push_back(static_cast<int>(i));
  }
  Rng rng(derive_seed(run.seed, run.problem_id, run.loop_id, n, SeedRole::BonSelect));
  if (!accepted.empty()) {
    sel.index = accepted[rng.below(accepted.size())];
    sel.accepted = true;
  } else {
    sel.index = static_cast<int>(rng.below(avail));
  }
  sel.correct = run.samples[static_cast<std::size_t>(sel.index)].attempt.correct.value_or(false);
  return sel;
}

std::vector<MatchedComputeRow> matched_compute_compare(std::span<const VRTrace> vr, std::span<const BonRun> bon,
                                                       std::span<const int> budgets) {
  if (vr.empty() || bon.empty()) throw Error("matched_compute_compare: empty arm");
  std::set<std::pair<std::string, int>> vr_keys;
  std::set<std::pair<std::string, int>> bon_keys;
  for (const auto& t : vr) vr_keys.emplace(t.problem_id, t.loop_id);
  for (const auto& b : bon) bon_keys.emplace(b.problem_id, b.loop_id);
  if (vr_keys != bon_keys) throw Error("matched_compute_compare: arms cover different (problem, loop) sets");

  std::vector<MatchedComputeRow> rows;
  for (const int r : budgets) {
    MatchedComputeRow row;
    row.rounds = r;
    row.n = r + 1;
    row.loops = vr.size();
    for (const auto& b : bon) {
      if (b.requested < row.n) {
        throw Error("matched_compute_compare: budget r=" + std::to_string(r) + " needs N=" +
                    std::to_string(row.n) + " but " + b.problem_id + "#" + std::to_string(b.loop_id) +
                    " drew only " + std::to_string(b.requested));
      }
    }
    row.vr_pass1 = round_pass1(vr, r);
    std::size_t bon_hits = 0;
    for (const auto& b : bon) {
      if (bon_select(b, row.n).correct) ++bon_hits;
      const auto used = std::min<std::size_t>(static_cast<std::size_t>(row.n), b.samples.size());
      row.bon_generator_calls += static_cast<std::int64_t>(used);
      row.bon_verifier_calls += static_cast<std::int64_t>(used);
    }
    row.bon_pass1 = static_cast<double>(bon_hits) / static_cast<double>(bon.size());
    for (const auto& t : vr) {
      row.vr_generator_budget += row.n;
      row.vr_generator_calls += std::min<std::int64_t>(row.n, t.generator_calls());
      row.vr_verifier_calls += std::min<std::int64_t>(r, t.verifier_calls());
    }
    row.vr_se = standard_error(row.vr_pass1, vr.size());
    row.bon_se = standard_error(row.bon_pass1, bon.size());
    rows.push_back(row);
  }
  return rows;
}

void write_round_series_csv(std::ostream& out, std::span<const VRTrace> traces, int max_rounds,
                            std::span<const int> ks) {
  out << "round,loops,pass1";
  for (const int k : ks) out << ",pass_at_" << k;
  out << '\n';
  for (int r = 0; r <= max_rounds; ++r) {
    out << r << ',' << traces.size() << ',' << fmt(round_pass1(traces, r));
    for (const int k : ks) out << ',' << fmt(pass_at_k_per_round(traces, r, k));
    out << '\n';
  }
}

void write_frontier_csv(std::ostream& out, std::span<const FrontierPoint> points) {
  out << "round,coverage,precision,accepted,accepted_correct,total\n";
  for (const auto& p : points) {
    out << p.round << ',' << fmt(p.coverage) << ',' << fmt(p.precision) << ',' << p.accepted << ','
        << p.accepted_correct << ',' << p.total << '\n';
  }
}

void write_score_accuracy_csv(std::ostream& out, const ScoreAccuracySeries& series) {
  out << "round,mean_score,scored_loops,pass1,score_source\n";
  for (const auto& p : series.points) {
    out << p.round << ',' << fmt(p.mean_score) << ',' << p.scored << ',' << fmt(p.pass1) << ','
        << series.score_source << '\n';
  }
}

void write_matched_compute_csv(std::ostream& out, std::span<const MatchedComputeRow> rows) {
  out << "rounds,bon_n,loops,vr_pass1,vr_se,bon_pass1,bon_se,vr_generator_budget,bon_generator_calls,"
         "vr_generator_calls,vr_verifier_calls,bon_verifier_calls\n";
  for (const auto& r : rows) {
    out << r.rounds << ',' << r.n << ',' << r.loops << ',' << fmt(r.vr_pass1) << ',' << fmt(r.vr_se) << ','
        << fmt(r.bon_pass1) << ',' << fmt(r.bon_se) << ',' << r.vr_generator_budget << ','
        << r.bon_generator_calls << ',' << r.vr_generator_calls << ',' << r.vr_verifier_calls << ','
        << r.bon_verifier_calls << '\n';
  }
}

json bon_to_json(const BonRun& run) {
  json samples = json::array();
  for (const auto& s : run.samples) {
    samples.push_back(json{{"attempt", s.attempt},
                           {"verdict", s.verdict ? json(*s.verdict) : json(nullptr)},
                           {"generator_usage", s.generator_usage},
                           {"verifier_usage", s.verifier_usage}});
  }
  return json{{"schema", "vrloop.bon"},
              {"schema_version", kBonSchemaVersion},
              {"arm", "bon"},
              {"problem_id", run.problem_id},
              {"loop_id", run.loop_id},
              {"seed", run.seed},
              {"requested", run.requested},
              {"samples", std::move(samples)},
              {"errors", run.errors}};
}

BonRun bon_from_json(const json& j) {
  try {
    if (j.at("schema") != "vrloop.bon" || j.at("schema_version") != kBonSchemaVersion) {
      throw SchemaError("not a vrloop.bon v" + std::to_string(kBonSchemaVersion) + " record");
    }
    BonRun run;
    j.at("problem_id").get_to(run.problem_id);
    j.at("loop_id").get_to(run.loop_id);
    j.at("seed").get_to(run.seed);
    j.at("requested").get_to(run.requested);
    for (const auto& s : j.at("samples")) {
      BonSample b;
      s.at("attempt").get_to(b.attempt);
      if (!s.at("verdict").is_null()) b.verdict = s.at("verdict").get<VerifierOutput>();
      s.at("generator_usage").get_to(b.generator_usage);
      s.at("verifier_usage").get_to(b.verifier_usage);
      run.samples.push_back(std::move(b));
    }
    j.at("errors").get_to(run.errors);
    return run;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bon record: ") + e.what());
  }
}

}  // namespace vrloop
