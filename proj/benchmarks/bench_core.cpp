#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vrloop/divergence.hpp"
#include "vrloop/loop.hpp"
#include "vrloop/metrics.hpp"
#include "vrloop/protocol.hpp"
#include "vrloop/sim_agents.hpp"

using namespace vrloop;

static void BM_PassAtK(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    double acc = 0;
    for (int c = 0; c <= n; c += 7) acc += pass_at_k(n, c, n / 2);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_PassAtK)->Arg(32)->Arg(1024);

static void BM_JensenShannon(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> p(static_cast<std::size_t>(state.range(0))), q(p.size());
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i] = u(rng);
    sq += q[i] = u(rng);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] /= sp;
    q[i] /= sq;
  }
  for (auto _ : state) benchmark::DoNotOptimize(jensen_shannon(p, q));
}
BENCHMARK(BM_JensenShannon)->Arg(21)->Arg(1024);

static void BM_ParseVerdict(benchmark::State& state) {
  const std::string raw =
      "The second step drops a sign when expanding the product, so the total is off.\n"
      "Score: 0.25\nPredicted verdict: INCORRECT";
  for (auto _ : state) benchmark::DoNotOptimize(parse_verdict(raw));
}
BENCHMARK(BM_ParseVerdict);

static void BM_SimLoop(benchmark::State& state) {
  const auto prompts = PromptSet::defaults();
  SimGenerator gen({}, prompts);
  SimVerifier ver({}, prompts);
  LoopConfig cfg;
  cfg.max_rounds = static_cast<int>(state.range(0));
  Problem p;
  p.id = "bench";
  p.statement = "Compute 6 * 7.";
  p.gold_answer = "42";
  int loop = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_vr_loop(p, gen, ver, cfg, loop++, 7));
}
BENCHMARK(BM_SimLoop)->Arg(4)->Arg(20);
BENCHMARK_MAIN();
