#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vrloop/config.hpp"
#include "vrloop/errors.hpp"
#include "vrloop/runner.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> max_rounds;
  std::optional<int> loops_per_problem;
  std::optional<int> in_flight;
  std::optional<std::string> output_dir;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verification-refinement loop experiments"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::size_t max_new_items = 0;
  bool verbose = false;
  std::string metrics_out;

  app.add_option("-c,--config", config_path, "YAML run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", ov.seed, "Base seed");
  app.add_option("--max-rounds", ov.max_rounds, "Verification rounds per loop (default 20)");
  app.add_option("--loops-per-problem", ov.loops_per_problem, "Independent loops per problem (default 32)");
  app.add_option("--in-flight", ov.in_flight, "Concurrently active loops");
  app.add_option("--output-dir", ov.output_dir, "Run directory (overrides run.output_dir)");
  app.add_flag("-v,--verbose", verbose, "Progress on stderr");
  // Stops after N newly scheduled items; used to exercise resumption.
  app.add_option("--max-new-items", max_new_items)->group("");

  const char* commands[][2] = {
      {"bin", "Estimate pass@1 per problem and assign difficulty bins"},
      {"dedup", "Drop test problems too similar to a training problem"},
      {"run-vr", "Run verification-refinement loops"},
      {"run-bon", "Run the best-of-N baseline"},
      {"build-opd", "Build on-policy distillation and verdict-reward records"},
      {"collect-vil", "Collect verifier-in-the-loop episodes"},
      {"metrics", "Compute metrics from persisted traces"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (std::string(name) == "metrics") sub->add_option("--out", metrics_out, "Directory for CSV output");
  }

  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();

  try {
    auto config = vrloop::load_config(config_path);
    if (ov.seed) config.seed = *ov.seed;
    if (ov.max_rounds) {
      config.loop.max_rounds = *ov.max_rounds;
      config.loop.validate();
    }
    if (ov.loops_per_problem) config.loops_per_problem = *ov.loops_per_problem;
    if (ov.in_flight) config.in_flight = *ov.in_flight;
    if (ov.output_dir) config.output_dir = *ov.output_dir;
    if (config.loops_per_problem < 1) throw vrloop::ConfigError("--loops-per-problem must be >= 1");
    if (config.in_flight < 1) throw vrloop::ConfigError("--in-flight must be >= 1");
    vrloop::apply_env_overrides(config);

    vrloop::RunOptions options;
    options.quiet = !verbose;
    if (max_new_items > 0) options.max_new_items = max_new_items;

    vrloop::CommandResult result;
    if (sub->get_name() == "metrics" && !metrics_out.empty()) {
      try {
        result = vrloop::cmd_metrics(config, options, metrics_out);
      } catch (const vrloop::ConfigError& e) {
        result.exit_code = 2;
        result.summary = std::string("config error: ") + e.what();
      }
    } else {
      result = vrloop::run_command(sub->get_name(), config, options);
    }
    (result.exit_code == 0 ? std::cout : std::cerr) << result.summary << '\n';
    return result.exit_code;
  } catch (const vrloop::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
