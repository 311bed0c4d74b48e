#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrloop/config.hpp"
#include "vrloop/types.hpp"

namespace vrloop {

inline constexpr std::string_view kEngineVersion = "0.1.0";

struct WorkItem {
  std::string key;
  std::function<void()> run;
};

struct ScheduleReport {
  std::size_t succeeded = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (key, reason)
  int peak_active = 0;
};

// Runs items on `bound` workers; an exception fails only its own item.
ScheduleReport schedule_loops(std::vector<WorkItem> items, int bound);

struct UsageTotals {
  std::int64_t calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::uint64_t base_seed = 0;
  std::string engine_version{kEngineVersion};
  std::map<std::string, std::string> dataset_snapshots;  // role -> sha256 of the file
  std::map<std::string, std::set<std::string>> completed;  // arm -> "problem#loop"
  std::map<std::string, UsageTotals> usage;                // "role:identity" -> totals

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Loads `<dir>/manifest.json`, or starts one. A stored config hash that
// differs from `config.hash()` raises ConfigError.
RunManifest open_manifest(const RunConfig& config);
// Atomic rewrite. Completed keys may only grow.
void save_manifest(const RunConfig& config, const RunManifest& manifest);

struct RunOptions {
  // Stops scheduling after this many new items (interruption hook).
  std::optional<std::size_t> max_new_items;
  bool quiet = true;
};

struct CommandResult {
  int exit_code = 0;  // 0 ok, 1 partial failure, 2 config error
  std::size_t new_items = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  std::string summary;
};

// Artifact file names inside the output directory.
namespace artifacts {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kBinned = "problems_binned.jsonl";
inline constexpr const char* kBinAudit = "bin_rollouts.jsonl";
inline constexpr const char* kDeduped = "problems_dedup.jsonl";
inline constexpr const char* kDedupRemoved = "dedup_removed.jsonl";
inline constexpr const char* kTracesVr = "traces_vr.jsonl";
inline constexpr const char* kTracesBon = "traces_bon.jsonl";
inline constexpr const char* kAudit = "audit.jsonl";
inline constexpr const char* kOpd = "opd.jsonl";
inline constexpr const char* kVerdicts = "verdicts.jsonl";
inline constexpr const char* kStvLoss = "stv_loss.json";
inline constexpr const char* kVil = "vil_episodes.jsonl";
inline constexpr const char* kRoundSeriesCsv = "round_series.csv";
inline constexpr const char* kFrontierCsv = "frontier.csv";
inline constexpr const char* kScoreCsv = "score_accuracy.csv";
inline constexpr const char* kMatchedCsv = "matched_compute.csv";
}  // namespace artifacts

CommandResult cmd_bin(const RunConfig& config, const RunOptions& options = {});
CommandResult cmd_dedup(const RunConfig& config, const RunOptions& options = {});
CommandResult cmd_run_vr(const RunConfig& config, const RunOptions& options = {});
CommandResult cmd_run_bon(const RunConfig& config, const RunOptions& options = {});
CommandResult cmd_build_opd(const RunConfig& config, const RunOptions& options = {});
CommandResult cmd_collect_vil(const RunConfig& config, const RunOptions& options = {});
// Reads persisted traces only; writes CSVs into `out_dir` (default: the
// run's output directory).
CommandResult cmd_metrics(const RunConfig& config, const RunOptions& options = {},
                          const std::filesystem::path& out_dir = {});

// Dispatches by subcommand name; ConfigError maps to exit code 2.
CommandResult run_command(const std::string& name, const RunConfig& config, const RunOptions& options = {});

std::vector<VRTrace> load_traces(const std::filesystem::path& path);
// SHA-256 over the sorted canonical lines of a trace file; independent of
// the order in which concurrent loops finished.
std::string trace_set_digest(const std::filesystem::path& path);

}  // namespace vrloop
