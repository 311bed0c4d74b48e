#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include "test_support.hpp"
#include "vrloop/config.hpp"
#include "vrloop/dataset.hpp"
#include "vrloop/jsonl.hpp"
#include "vrloop/runner.hpp"
#include "vrloop/serialize.hpp"

using namespace vrloop;

namespace {

std::vector<Problem> problems(int n) {
  std::vector<Problem> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(vrtest::make_problem("q" + std::to_string(i), std::to_string(100 + i),
                                       "Problem number " + std::to_string(i) + " about topic " +
                                           std::to_string(i * 7 % 13) + "."));
  }
  return out;
}

std::string sim_yaml(const std::string& out_dir, int loops, int in_flight = 4, const std::string& extra = "") {
  return "run:\n  id: t\n  output_dir: " + out_dir + "\n  seed: 99\n  loops_per_problem: " + std::to_string(loops) +
         "\n  in_flight: " + std::to_string(in_flight) +
         "\ndataset:\n  problems: problems.jsonl\n  train: train.jsonl\n  rollouts: 8\n"
         "loop:\n  max_rounds: 4\n"
         "generator:\n  kind: sim\n  sim: {solve_prob_unbinned: 0.2, uplift_informative: 0.1}\n"
         "verifier:\n  kind: sim\n  sim: {tpr: 0.8, fpr: 0.1}\n"
         "stv:\n  pairs_per_problem: 1\n" +
         extra;
}

struct Workspace {
  vrtest::TempDir dir;
  explicit Workspace(int n_problems = 6) {
    save_problems_jsonl(problems(n_problems), dir / "problems.jsonl");
    save_problems_jsonl({problems(n_problems)[0], vrtest::make_problem("t1", "1", "Unrelated training text.")},
                        dir / "train.jsonl");
  }
  RunConfig config(const std::string& out, int loops, int in_flight = 4, const std::string& extra = "") {
    std::ofstream(dir / "cfg.yaml") << sim_yaml(out, loops, in_flight, extra);
    return load_config(dir / "cfg.yaml");
  }
};

}  // namespace

TEST(Config, ParsesSimConfigAndResolvesPaths) {
  Workspace ws;
  const auto c = ws.config("out", 3);
  EXPECT_EQ(c.loops_per_problem, 3);
  EXPECT_EQ(c.loop.max_rounds, 4);
  EXPECT_EQ(c.bon_n, 5);
  EXPECT_EQ(c.problems, ws.dir / "problems.jsonl");
  EXPECT_EQ(c.output_dir, ws.dir / "out");
  EXPECT_DOUBLE_EQ(c.generator.sim_generator.uplift_informative, 0.1);
  EXPECT_DOUBLE_EQ(c.verifier.sim_verifier.fpr, 0.1);
  EXPECT_EQ(c.opd_pairs_per_problem, 1);
}

TEST(Config, UnknownKeysNameTheirPath) {
  const auto expect_error = [](const std::string& yaml, const std::string& fragment) {
    try {
      parse_config(yaml);
      ADD_FAILURE() << "no error for " << yaml;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_error("run:\n  seeed: 1\n", "run.seeed");
  expect_error("generator:\n  sim:\n    tprr: 0.1\n", "generator.sim.tprr");
  expect_error("bogus: 1\n", "bogus");
  expect_error("loop:\n  max_rounds: many\n", "loop.max_rounds");
  expect_error("loop:\n  verdict_mode: maybe\n", "loop.verdict_mode");
  expect_error("verifier:\n  kind: http\n  endpoint:\n    api_key: sk-123\n", "api_key");
  expect_error("generator:\n  sim:\n    solve_prob_hard: 2\n", "generator.sim");
  expect_error("run: [1, 2]\n", "run");
  expect_error("run: {loops_per_problem: 0}\n", "loops_per_problem");
  expect_error("{{{", "YAML");
}

TEST(Config, HashIsStableAndSensitive) {
  const auto base = parse_config("run: {seed: 1}\nloop: {max_rounds: 3}\n");
  EXPECT_EQ(base.hash(), parse_config("loop: {max_rounds: 3}\nrun: {seed: 1}\n").hash());
  EXPECT_EQ(base.hash().size(), 64u);
  // Concurrency, output location and secrets do not affect outputs.
  EXPECT_EQ(base.hash(), parse_config("run: {seed: 1, in_flight: 3, output_dir: /x, id: other}\n"
                                      "loop: {max_rounds: 3}\n")
                             .hash());
  auto with_key = base;
  with_key.generator.endpoint.api_key = "secret";
  EXPECT_EQ(with_key.hash(), base.hash());
  EXPECT_EQ(with_key.canonical().dump().find("secret"), std::string::npos);
  EXPECT_NE(base.hash(), parse_config("run: {seed: 2}\nloop: {max_rounds: 3}\n").hash());
  EXPECT_NE(base.hash(), parse_config("run: {seed: 1}\nloop: {max_rounds: 4}\n").hash());
  EXPECT_NE(base.hash(), parse_config("run: {seed: 1}\nloop: {max_rounds: 3}\ngenerator: {sim: {tpr: 0.5}}\n").hash());
}

TEST(Config, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, ApiKeyComesFromEnvironment) {
  auto c = parse_config("generator:\n  kind: http\n"
                        "  endpoint: {base_url: 'http://x/v1', model: m, api_key_env: VRLOOP_TEST_KEY}\n");
  ::setenv("VRLOOP_TEST_KEY", "from-env", 1);
  apply_env_overrides(c);
  ::unsetenv("VRLOOP_TEST_KEY");
  EXPECT_EQ(c.generator.endpoint.api_key, "from-env");
  EXPECT_TRUE(c.verifier.endpoint.api_key.empty() || std::getenv("VRLOOP_API_KEY"));
}

TEST(Schedule, BoundIsRespectedAndFailuresIsolated) {
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  std::vector<WorkItem> items;
  for (int i = 0; i < 40; ++i) {
    items.push_back({"k" + std::to_string(i), [&, i] {
                       const int now = ++active;
                       int p = peak.load();
                       while (now > p && !peak.compare_exchange_weak(p, now)) {
                       }
                       std::this_thread::sleep_for(std::chrono::milliseconds(2));
                       --active;
                       if (i == 17) throw TransportError("poisoned");
                     }});
  }
  const auto report = schedule_loops(std::move(items), 4);
  EXPECT_EQ(report.succeeded, 39u);
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].first, "k17");
  EXPECT_EQ(report.failures[0].second, "poisoned");
  EXPECT_LE(peak.load(), 4);
  EXPECT_LE(report.peak_active, 4);
  EXPECT_THROW(schedule_loops({}, 0), ConfigError);
}

TEST(Runner, DigestIndependentOfConcurrency) {
  Workspace ws;
  const auto serial = ws.config("serial", 4, 1);
  ASSERT_EQ(cmd_run_vr(serial).exit_code, 0);
  const auto wide = ws.config("wide", 4, 64);
  ASSERT_EQ(cmd_run_vr(wide).exit_code, 0);
  EXPECT_EQ(trace_set_digest(serial.output_dir / artifacts::kTracesVr),
            trace_set_digest(wide.output_dir / artifacts::kTracesVr));
  EXPECT_EQ(load_traces(wide.output_dir / artifacts::kTracesVr).size(), 24u);
}

TEST(Runner, ResumeMatchesUninterruptedRun) {
  Workspace ws(10);
  const auto full = ws.config("full", 5);
  ASSERT_EQ(cmd_run_vr(full).exit_code, 0);

  const auto part = ws.config("part", 5);
  RunOptions stop;
  stop.max_new_items = 23;
  const auto first = cmd_run_vr(part, stop);
  EXPECT_EQ(first.new_items, 23u);
  const auto second = cmd_run_vr(part);
  EXPECT_EQ(second.skipped, 23u);
  EXPECT_EQ(second.new_items, 27u);
  EXPECT_EQ(trace_set_digest(full.output_dir / artifacts::kTracesVr),
            trace_set_digest(part.output_dir / artifacts::kTracesVr));
  const auto third = cmd_run_vr(part);
  EXPECT_EQ(third.new_items, 0u);
  EXPECT_EQ(third.skipped, 50u);

  // Resume after a crash mid-line keeps only complete records.
  {
    std::ofstream out(part.output_dir / artifacts::kTracesVr, std::ios::app);
    out << "{\"problem_id\": \"q0\", \"loo";
  }
  EXPECT_EQ(cmd_run_vr(part).exit_code, 0);
  EXPECT_EQ(trace_set_digest(full.output_dir / artifacts::kTracesVr),
            trace_set_digest(part.output_dir / artifacts::kTracesVr));

  const auto m = open_manifest(part);
  EXPECT_EQ(m.completed.at("vr").size(), 50u);
  EXPECT_GT(m.usage.at("vr:generator:sim-generator").calls, 0);
}

TEST(Runner, ChangedConfigIsRejected) {
  Workspace ws;
  const auto c = ws.config("run", 2);
  ASSERT_EQ(cmd_run_vr(c).exit_code, 0);
  const auto changed = ws.config("run", 2, 4, "bon:\n  n: 3\n");
  EXPECT_THROW(open_manifest(changed), ConfigError);
  EXPECT_EQ(run_command("run-vr", changed).exit_code, 2);
  EXPECT_EQ(run_command("no-such-command", c).exit_code, 2);
}

TEST(Runner, UnreachableEndpointIsPartialFailureAndRetriedOnResume) {
  Workspace ws(2);
  const auto c = ws.config("dead", 2, 2,
                           "");
  auto dead = c;
  dead.generator.kind = "http";
  dead.generator.endpoint.base_url = "http://127.0.0.1:1/v1";
  dead.generator.endpoint.model = "m";
  dead.generator.endpoint.max_retries = 0;
  dead.generator.endpoint.timeout_s = 1;
  const auto r = run_command("run-vr", dead);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(r.failures, 4u);
  EXPECT_EQ(read_jsonl(c.output_dir / artifacts::kAudit).records.size(), 4u);
  EXPECT_TRUE(read_jsonl(c.output_dir / artifacts::kTracesVr).records.empty());
}

TEST(Runner, FullPipelineProducesArtifacts) {
  Workspace ws(8);
  auto c = ws.config("pipe", 3, 4, "metrics:\n  ks: [1, 2]\nvil:\n  episodes_per_problem: 2\n");
  EXPECT_EQ(run_command("bin", c).exit_code, 0);
  for (const auto& p : load_problems_jsonl(c.output_dir / artifacts::kBinned)) {
    ASSERT_TRUE(p.bin && p.pass1_estimate);
    EXPECT_EQ(p.pass1_estimate->den, 8);
    EXPECT_EQ(*p.bin, bin_for(*p.pass1_estimate));
  }
  EXPECT_EQ(run_command("dedup", c).exit_code, 0);
  const auto removed = read_jsonl(c.output_dir / artifacts::kDedupRemoved).records;
  ASSERT_FALSE(removed.empty());  // q0 also sits in the training file
  EXPECT_EQ(removed[0]["problem_id"], "q0");
  EXPECT_EQ(run_command("run-vr", c).exit_code, 0);
  EXPECT_EQ(run_command("run-bon", c).exit_code, 0);
  EXPECT_EQ(run_command("build-opd", c).exit_code, 0);
  EXPECT_EQ(run_command("collect-vil", c).exit_code, 0);
  EXPECT_EQ(run_command("metrics", c).exit_code, 0);
  for (const char* f : {artifacts::kOpd, artifacts::kVerdicts, artifacts::kStvLoss, artifacts::kVil,
                        artifacts::kRoundSeriesCsv, artifacts::kFrontierCsv, artifacts::kScoreCsv,
                        artifacts::kMatchedCsv, artifacts::kManifest}) {
    EXPECT_TRUE(std::filesystem::exists(c.output_dir / f)) << f;
  }
  std::ifstream csv(c.output_dir / artifacts::kRoundSeriesCsv);
  std::string header;
  std::getline(csv, header);
  EXPECT_NE(header.find("pass_at_2"), std::string::npos) << header;
}
