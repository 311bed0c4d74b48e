#include "vrloop/runner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "vrloop/dataset.hpp"
#include "vrloop/errors.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/loop.hpp"
#include "vrloop/metrics.hpp"
#include "vrloop/serialize.hpp"
#include "vrloop/stv.hpp"
#include "vrloop/vil.hpp"

namespace vrloop {

namespace fs = std::filesystem;

ScheduleReport schedule_loops(std::vector<WorkItem> items, int bound) {
  if (bound < 1) throw ConfigError("in-flight bound must be >= 1");
  ScheduleReport report;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<int> active{0};
  std::atomic<int> peak{0};

  const auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= items.size()) return;
      const int now = ++active;
      int seen = peak.load();
      while (now > seen && !peak.compare_exchange_weak(seen, now)) {
      }
      std::optional<std::string> failure;
      try {
        items[i].run();
      } catch (const std::exception& e) {
        failure = e.what();
      } catch (...) {
        failure = "unknown exception";
      }
      --active;
      std::lock_guard lock(mu);
      if (failure) {
        report.failures.emplace_back(items[i].key, *failure);
      } else {
        ++report.succeeded;
      }
    }
  };

  const auto n = static_cast<std::size_t>(bound) < items.size() ? static_cast<std::size_t>(bound) : items.size();
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  report.peak_active = peak.load();
  std::sort(report.failures.begin(), report.failures.end());
  return report;
}

json RunManifest::to_json() const {
  json completed_j = json::object();
  for (const auto& [arm, keys] : completed) completed_j[arm] = keys;
  json usage_j = json::object();
  for (const auto& [k, u] : usage) {
    usage_j[k] = json{{"calls", u.calls}, {"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
  }
  return json{{"run_id", run_id},
              {"config_hash", config_hash},
              {"base_seed", base_seed},
              {"engine_version", engine_version},
              {"dataset_snapshots", dataset_snapshots},
              {"completed", std::move(completed_j)},
              {"usage", std::move(usage_j)}};
}

RunManifest RunManifest::from_json(const json& j) {
  try {
    RunManifest m;
    j.at("run_id").get_to(m.run_id);
    j.at("config_hash").get_to(m.config_hash);
    j.at("base_seed").get_to(m.base_seed);
    j.at("engine_version").get_to(m.engine_version);
    j.at("dataset_snapshots").get_to(m.dataset_snapshots);
    for (const auto& [arm, keys] : j.at("completed").items()) m.completed[arm] = keys.get<std::set<std::string>>();
    for (const auto& [k, u] : j.at("usage").items()) {
      m.usage[k] = UsageTotals{u.at("calls").get<std::int64_t>(), u.at("prompt_tokens").get<std::int64_t>(),
                               u.at("completion_tokens").get<std::int64_t>()};
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
}

namespace {

fs::path out_path(const RunConfig& c, const char* name) { return c.output_dir / name; }

std::string item_key(const std::string& problem_id, int loop_id) {
  return problem_id + "#" + std::to_string(loop_id);
}

std::string file_sha(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::vector<Problem> require_problems(const RunConfig& c) {
  if (c.problems.empty()) throw ConfigError("dataset.problems: required for this command");
  if (!fs::exists(c.problems)) throw ConfigError("dataset.problems: file not found: " + c.problems.string());
  return load_problems_jsonl(c.problems);
}

void log(const RunOptions& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << '\n';
}

// Keys already present in an arm's append-only output.
std::set<std::string> done_keys(const fs::path& path) {
  std::set<std::string> keys;
  if (!fs::exists(path)) return keys;
  for (const auto& r : read_jsonl(path).records) {
    keys.insert(item_key(r.at("problem_id").get<std::string>(), r.at("loop_id").get<int>()));
  }
  return keys;
}

void add_usage(RunManifest& m, const std::string& key, const TokenUsage& u) {
  auto& t = m.usage[key];
  ++t.calls;
  t.prompt_tokens += u.prompt_tokens;
  t.completion_tokens += u.completion_tokens;
}

void append_audit(const RunConfig& c, const std::string& command, const std::vector<std::pair<std::string, std::string>>& failures) {
  if (failures.empty()) return;
  JsonlAppender audit(out_path(c, artifacts::kAudit));
  for (const auto& [key, reason] : failures) {
    audit.append(json{{"command", command}, {"key", key}, {"reason", reason}});
  }
}

CommandResult finish(CommandResult r, const std::string& what) {
  std::ostringstream ss;
  ss << what << ": " << r.new_items << " new, " << r.skipped << " already done, " << r.failures << " failed";
  r.summary = ss.str();
  r.exit_code = r.failures > 0 ? 1 : 0;
  return r;
}

struct Prepared {
  RunManifest manifest;
  PromptSet prompts;
};

Prepared prepare(const RunConfig& c) {
  fs::create_directories(c.output_dir);
  return {open_manifest(c), load_prompts(c)};
}

// Shared driver for the two loop-level arms.
template <typename MakeRecord>
CommandResult run_arm(const RunConfig& c, const RunOptions& o, const char* file, const std::string& arm,
                      MakeRecord make_record) {
  const auto problems = require_problems(c);
  auto prep = prepare(c);
  const auto path = out_path(c, file);
  const auto done = done_keys(path);
  auto gen = make_generator(c.generator, prep.prompts);
  auto ver = make_verifier(c.verifier, prep.prompts);

  CommandResult result;
  std::vector<WorkItem> items;
  JsonlAppender out(path);
  for (const auto& p : problems) {
    for (int loop = 0; loop < c.loops_per_problem; ++loop) {
      const auto key = item_key(p.id, loop);
      if (done.count(key)) {
        ++result.skipped;
        continue;
      }
      if (o.max_new_items && items.size() >= *o.max_new_items) continue;
      items.push_back({key, [&, loop, key, problem = &p] {
                         const auto record = make_record(*problem, *gen, *ver, loop);
                         if (!record) throw TransportError(key + ": loop ended with an error");
                         out.append(*record);
                       }});
    }
  }
  log(o, arm + ": scheduling " + std::to_string(items.size()) + " items");
  const auto report = schedule_loops(std::move(items), c.in_flight);
  append_audit(c, arm, report.failures);
  result.new_items = report.succeeded;
  result.failures = report.failures.size();

  auto& m = prep.manifest;
  m.dataset_snapshots["problems"] = file_sha(c.problems);
  m.completed[arm].clear();
  m.usage.erase(arm + ":generator:" + gen->identity());
  m.usage.erase(arm + ":verifier:" + ver->identity());
  for (const auto& r : read_jsonl(path).records) {
    m.completed[arm].insert(item_key(r.at("problem_id").get<std::string>(), r.at("loop_id").get<int>()));
    if (arm == "vr") {
      for (const auto& u : r.at("usage")) {
        const auto role = u.at("role").get<std::string>();
        add_usage(m, arm + ":" + role + ":" + (role == "generator" ? gen->identity() : ver->identity()),
                  u.get<CallUsage>().tokens);
      }
    } else {
      for (const auto& s : r.at("samples")) {
        add_usage(m, arm + ":generator:" + gen->identity(), s.at("generator_usage").get<TokenUsage>());
        add_usage(m, arm + ":verifier:" + ver->identity(), s.at("verifier_usage").get<TokenUsage>());
      }
    }
  }
  save_manifest(c, m);
  return finish(result, arm);
}

}  // namespace

RunManifest open_manifest(const RunConfig& config) {
  const auto path = out_path(config, artifacts::kManifest);
  const auto hash = config.hash();
  if (!fs::exists(path)) {
    RunManifest m;
    m.run_id = config.run_id;
    m.config_hash = hash;
    m.base_seed = config.seed;
    return m;
  }
  std::ifstream in(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  auto m = RunManifest::from_json(j);
  if (m.config_hash != hash) {
    throw ConfigError("config changed since this run started (manifest hash " + m.config_hash.substr(0, 12) +
                      ", current " + hash.substr(0, 12) + "); use a new output directory");
  }
  return m;
}

void save_manifest(const RunConfig& config, const RunManifest& manifest) {
  const auto path = out_path(config, artifacts::kManifest);
  if (fs::exists(path)) {
    std::ifstream in(path);
    const auto old = RunManifest::from_json(json::parse(in));
    if (old.config_hash != manifest.config_hash) throw ConfigError("manifest config hash is immutable");
    for (const auto& [arm, keys] : old.completed) {
      const auto it = manifest.completed.find(arm);
      const bool superset = it != manifest.completed.end() &&
                            std::includes(it->second.begin(), it->second.end(), keys.begin(), keys.end());
      if (!superset) throw Error("manifest completed keys for arm '" + arm + "' would shrink");
    }
  }
  const auto tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << manifest.to_json().dump(2) << '\n';
    if (!out.flush()) throw IoError("cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

CommandResult cmd_bin(const RunConfig& c, const RunOptions& o) {
  const auto problems = require_problems(c);
  auto prep = prepare(c);
  const auto rollouts_path = out_path(c, artifacts::kBinAudit);
  std::set<std::string> done;
  if (fs::exists(rollouts_path)) {
    for (const auto& r : read_jsonl(rollouts_path).records) done.insert(r.at("problem_id").get<std::string>());
  }
  auto gen = make_generator(c.generator, prep.prompts);

  CommandResult result;
  std::vector<WorkItem> items;
  JsonlAppender out(rollouts_path);
  for (const auto& p : problems) {
    if (done.count(p.id)) {
      ++result.skipped;
      continue;
    }
    if (o.max_new_items && items.size() >= *o.max_new_items) continue;
    items.push_back({p.id, [&, problem = &p] {
                       const auto est = estimate_pass1(*problem, *gen, c.rollouts, c.seed);
                       if (!est.estimate) {
                         throw TransportError(problem->id + ": " + std::to_string(est.requested - est.completed) +
                                              " rollout(s) failed");
                       }
                       json rollouts = json::array();
                       for (const auto& r : est.rollouts) {
                         rollouts.push_back(json{{"rollout", r.rollout},
                                                 {"extracted_answer", r.extracted_answer ? json(*r.extracted_answer) : json(nullptr)},
                                                 {"correct", r.correct ? json(*r.correct) : json(nullptr)}});
                       }
                       out.append(json{{"problem_id", est.problem_id},
                                       {"correct", est.correct},
                                       {"rollouts_n", est.requested},
                                       {"estimate", *est.estimate},
                                       {"rollouts", std::move(rollouts)}});
                     }});
  }
  const auto report = schedule_loops(std::move(items), c.in_flight);
  append_audit(c, "bin", report.failures);
  result.new_items = report.succeeded;
  result.failures = report.failures.size();

  std::map<std::string, Rational> estimates;
  for (const auto& r : read_jsonl(rollouts_path).records) {
    estimates[r.at("problem_id").get<std::string>()] = r.at("estimate").get<Rational>();
  }
  std::vector<Problem> binned;
  std::map<DifficultyBin, int> counts;
  for (auto p : problems) {
    const auto it = estimates.find(p.id);
    if (it == estimates.end()) continue;
    p.pass1_estimate = it->second;
    p.bin = bin_for(it->second);
    ++counts[*p.bin];
    binned.push_back(std::move(p));
  }
  save_problems_jsonl(binned, out_path(c, artifacts::kBinned));
  prep.manifest.dataset_snapshots["problems"] = file_sha(c.problems);
  save_manifest(c, prep.manifest);
  auto r = finish(result, "bin");
  r.summary += " (hardest " + std::to_string(counts[DifficultyBin::Hardest]) + ", hard " +
               std::to_string(counts[DifficultyBin::Hard]) + ", excluded " +
               std::to_string(counts[DifficultyBin::Excluded]) + ")";
  return r;
}

CommandResult cmd_dedup(const RunConfig& c, const RunOptions&) {
  const auto test = require_problems(c);
  if (c.train_problems.empty()) throw ConfigError("dataset.train: required for dedup");
  if (!fs::exists(c.train_problems)) throw ConfigError("dataset.train: file not found: " + c.train_problems.string());
  const auto train = load_problems_jsonl(c.train_problems);
  auto prep = prepare(c);

  std::map<std::string, EmbeddingVector> embeddings;
  if (c.embeddings_kind == "file") {
    embeddings = load_embeddings_jsonl(c.embeddings_file, "file");
  } else {
    auto provider = make_embedder(c);
    EmbeddingCache cache(c.output_dir / "embeddings.cache");
    std::vector<Problem> all = test;
    all.insert(all.end(), train.begin(), train.end());
    embeddings = embed_problems(all, *provider, &cache);
  }
  const auto res = dedup_test_set(test, train, embeddings, c.dedup_threshold);
  save_problems_jsonl(res.kept, out_path(c, artifacts::kDeduped));
  std::vector<json> removed;
  for (const auto& r : res.removed) {
    removed.push_back(json{{"problem_id", r.problem_id}, {"nearest_train_id", r.nearest_train_id}, {"similarity", r.similarity}});
  }
  write_jsonl_export(out_path(c, artifacts::kDedupRemoved), export_header("vrloop.dedup_removed", 1), removed);
  prep.manifest.dataset_snapshots["problems"] = file_sha(c.problems);
  prep.manifest.dataset_snapshots["train"] = file_sha(c.train_problems);
  save_manifest(c, prep.manifest);

  CommandResult r;
  r.new_items = res.kept.size();
  r.summary = "dedup: kept " + std::to_string(res.kept.size()) + ", removed " + std::to_string(res.removed.size());
  return r;
}

CommandResult cmd_run_vr(const RunConfig& c, const RunOptions& o) {
  return run_arm(c, o, artifacts::kTracesVr, "vr",
                 [&](const Problem& p, GeneratorAgent& g, VerifierAgent& v, int loop) -> std::optional<json> {
                   const auto trace = run_vr_loop(p, g, v, c.loop, loop, c.seed);
                   if (trace.termination == Termination::Error) {
                     throw TransportError(trace.error.value_or("loop error"));
                   }
                   return trace_to_json(trace);
                 });
}

CommandResult cmd_run_bon(const RunConfig& c, const RunOptions& o) {
  return run_arm(c, o, artifacts::kTracesBon, "bon",
                 [&](const Problem& p, GeneratorAgent& g, VerifierAgent& v, int loop) -> std::optional<json> {
                   const auto run = run_bon(p, g, v, c.bon_n, loop, c.seed);
                   if (run.degraded()) {
                     std::string why = "degraded best-of-n (" + std::to_string(run.samples.size()) + "/" +
                                       std::to_string(run.requested) + " samples)";
                     if (!run.errors.empty()) why += ": " + run.errors.front();
                     throw TransportError(why);
                   }
                   return bon_to_json(run);
                 });
}

CommandResult cmd_build_opd(const RunConfig& c, const RunOptions& o) {
  const auto problems = require_problems(c);
  const auto traces_path = out_path(c, artifacts::kTracesVr);
  if (!fs::exists(traces_path)) throw ConfigError("build-opd needs V-R traces; run run-vr first");
  auto traces = load_traces(traces_path);
  std::sort(traces.begin(), traces.end(), [](const VRTrace& a, const VRTrace& b) {
    return std::tie(a.problem_id, a.loop_id) < std::tie(b.problem_id, b.loop_id);
  });
  auto prep = prepare(c);
  std::map<std::string, const Problem*> by_id;
  for (const auto& p : problems) by_id[p.id] = &p;

  std::vector<OpdPair> pairs;
  std::map<std::string, int> per_problem;
  for (const auto& t : traces) {
    const auto it = by_id.find(t.problem_id);
    if (it == by_id.end()) continue;
    for (std::size_t i = 0; i < t.rounds.size(); ++i) {
      if (!t.rounds[i].verifier_output) continue;
      if (per_problem[t.problem_id] >= c.opd_pairs_per_problem) break;
      ++per_problem[t.problem_id];
      pairs.push_back({*it->second, t.rounds[i].attempt,
                       t.problem_id + "/" + std::to_string(t.loop_id) + "/" + std::to_string(i)});
    }
  }
  if (o.max_new_items && pairs.size() > *o.max_new_items) pairs.resize(*o.max_new_items);

  auto student = make_logprob_backend(c.student, "student");
  auto teacher = make_logprob_backend(c.teacher, "teacher");
  student->probe();
  teacher->probe();

  std::vector<OpdAuditEntry> audit;
  const auto records = build_opd_records(*student, *teacher, prep.prompts, pairs, c.stv, c.student_sampling, c.seed, &audit);
  const auto verdicts = verdict_records_from(records, pairs, prep.prompts);
  export_opd_dataset(records, out_path(c, artifacts::kOpd));
  export_verdict_dataset(verdicts, out_path(c, artifacts::kVerdicts));

  std::vector<std::pair<std::string, std::string>> failures;
  for (const auto& a : audit) failures.emplace_back(a.attempt_ref + "#" + std::to_string(a.sample_index), a.reason);
  append_audit(c, "build-opd", failures);

  CommandResult r;
  r.new_items = records.size();
  r.failures = failures.size();
  r.exit_code = failures.empty() ? 0 : 1;
  r.summary = "build-opd: " + std::to_string(records.size()) + " OPD records, " + std::to_string(verdicts.size()) +
              " verdict records, teacher scoring '" + teacher->scoring_mechanism() + "'";
  if (!records.empty() && !verdicts.empty()) {
    const auto loss = stv_loss_report(records, verdicts, c.stv.lambda);
    json j = loss;
    j["divergence_kind"] = to_string(c.stv.divergence_kind);
    j["alpha"] = c.stv.alpha;
    j["teacher_scoring"] = teacher->scoring_mechanism();
    std::ofstream(out_path(c, artifacts::kStvLoss)) << j.dump(2) << '\n';
    r.summary += ", L_total " + std::to_string(loss.total);
  }
  prep.manifest.dataset_snapshots["problems"] = file_sha(c.problems);
  save_manifest(c, prep.manifest);
  return r;
}

CommandResult cmd_collect_vil(const RunConfig& c, const RunOptions& o) {
  const auto problems = require_problems(c);
  auto prep = prepare(c);
  auto gen = make_generator(c.generator, prep.prompts);
  auto ver = make_verifier(c.verifier, prep.prompts);
  if (!ver->frozen()) throw ConfigError("verifier: must be frozen for collect-vil (set frozen: true)");
  const int per_problem = c.vil_episodes_per_problem > 0 ? c.vil_episodes_per_problem : c.loops_per_problem;
  const auto markers = reference_markers(prep.prompts);

  std::mutex mu;
  std::map<std::pair<std::string, int>, VilEpisode> episodes;
  std::vector<std::pair<std::string, std::string>> hygiene;
  std::vector<WorkItem> items;
  for (const auto& p : problems) {
    for (int loop = 0; loop < per_problem; ++loop) {
      if (o.max_new_items && items.size() >= *o.max_new_items) break;
      items.push_back({item_key(p.id, loop), [&, loop, problem = &p] {
                         std::vector<VilAuditEntry> audit;
                         auto ep = collect_vil_episode(*problem, *gen, *ver, prep.prompts, c.loop, loop, c.seed, &audit);
                         if (!ep) throw TransportError(audit.empty() ? "episode discarded" : audit.front().reason);
                         const auto leaks = episode_hygiene_violations(*ep, *problem, markers);
                         std::lock_guard lock(mu);
                         for (const auto& l : leaks) hygiene.emplace_back(item_key(problem->id, loop), l);
                         episodes.emplace(std::make_pair(problem->id, loop), std::move(*ep));
                       }});
    }
  }
  const auto report = schedule_loops(std::move(items), c.in_flight);
  auto failures = report.failures;
  failures.insert(failures.end(), hygiene.begin(), hygiene.end());
  append_audit(c, "collect-vil", failures);

  std::vector<VilEpisode> ordered;
  ordered.reserve(episodes.size());
  for (auto& [k, e] : episodes) ordered.push_back(std::move(e));
  export_episodes(ordered, out_path(c, artifacts::kVil));
  save_manifest(c, prep.manifest);

  CommandResult r;
  r.new_items = ordered.size();
  r.failures = failures.size();
  r.exit_code = failures.empty() ? 0 : 1;
  r.summary = "collect-vil: " + std::to_string(ordered.size()) + " episodes, " +
              std::to_string(report.failures.size()) + " discarded, " + std::to_string(hygiene.size()) +
              " hygiene violations";
  return r;
}

CommandResult cmd_metrics(const RunConfig& c, const RunOptions&, const fs::path& out_dir) {
  const fs::path dir = out_dir.empty() ? c.output_dir : out_dir;
  const auto traces_path = out_path(c, artifacts::kTracesVr);
  if (!fs::exists(traces_path)) throw ConfigError("metrics needs " + traces_path.string());
  const auto traces = load_traces(traces_path);
  if (traces.empty()) throw Error("no traces in " + traces_path.string());
  fs::create_directories(dir);
  int max_rounds = traces.front().max_rounds;
  for (const auto& t : traces) max_rounds = std::min(max_rounds, t.max_rounds);

  std::map<std::string, int> loops;
  for (const auto& t : traces) ++loops[t.problem_id];
  int n = loops.begin()->second;
  for (const auto& [id, cnt] : loops) n = std::min(n, cnt);
  std::vector<int> ks;
  for (const int k : c.metrics_ks) {
    if (k <= n) ks.push_back(k);
  }

  std::vector<std::string> written;
  const auto write = [&](const char* name, auto&& fn) {
    std::ofstream out(dir / name, std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    fn(out);
    written.push_back(name);
  };
  write(artifacts::kRoundSeriesCsv, [&](std::ostream& os) { write_round_series_csv(os, traces, max_rounds, ks); });
  const auto frontier = precision_coverage(traces, max_rounds);
  write(artifacts::kFrontierCsv, [&](std::ostream& os) { write_frontier_csv(os, frontier); });
  try {
    const auto series = score_accuracy_series(traces, max_rounds, std::string(to_string(c.verifier.score_source)));
    write(artifacts::kScoreCsv, [&](std::ostream& os) { write_score_accuracy_csv(os, series); });
  } catch (const Error&) {
    // no scores reported: the diagnostic is skipped
  }

  const auto bon_path = out_path(c, artifacts::kTracesBon);
  if (fs::exists(bon_path)) {
    std::vector<BonRun> bon;
    for (const auto& r : read_jsonl(bon_path).records) bon.push_back(bon_from_json(r));
    if (!bon.empty()) {
      int max_n = bon.front().requested;
      for (const auto& b : bon) max_n = std::min(max_n, b.requested);
      std::vector<int> budgets = c.metrics_budgets;
      if (budgets.empty()) {
        for (int r = 0; r <= std::min(max_rounds, max_n - 1); ++r) budgets.push_back(r);
      }
      const auto rows = matched_compute_compare(traces, bon, budgets);
      write(artifacts::kMatchedCsv, [&](std::ostream& os) { write_matched_compute_csv(os, rows); });
    }
  }

  CommandResult r;
  r.new_items = written.size();
  r.summary = "metrics: " + std::to_string(traces.size()) + " traces ->";
  for (const auto& w : written) r.summary += " " + w;
  return r;
}

CommandResult run_command(const std::string& name, const RunConfig& config, const RunOptions& options) {
  try {
    if (name == "bin") return cmd_bin(config, options);
    if (name == "dedup") return cmd_dedup(config, options);
    if (name == "run-vr") return cmd_run_vr(config, options);
    if (name == "run-bon") return cmd_run_bon(config, options);
    if (name == "build-opd") return cmd_build_opd(config, options);
    if (name == "collect-vil") return cmd_collect_vil(config, options);
    if (name == "metrics") return cmd_metrics(config, options);
    throw ConfigError("unknown command '" + name + "'");
  } catch (const ConfigError& e) {
    CommandResult r;
    r.exit_code = 2;
    r.summary = std::string("config error: ") + e.what();
    return r;
  } catch (const CapabilityError& e) {
    CommandResult r;
    r.exit_code = 2;
    r.summary = std::string("capability error: ") + e.what();
    return r;
  }
}

std::vector<VRTrace> load_traces(const fs::path& path) {
  std::vector<VRTrace> out;
  for (const auto& r : read_jsonl(path).records) out.push_back(trace_from_json(r));
  return out;
}

std::string trace_set_digest(const fs::path& path) {
  std::vector<std::string> lines;
  for (const auto& r : read_jsonl(path).records) lines.push_back(r.dump());
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) {
    all += l;
    all += '\n';
  }
  return sha256_hex(all);
}

}  // namespace vrloop
