#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace vrloop {

// Append-only JSONL writer. Each line goes out in a single write(2) on an
// O_APPEND descriptor, so a line is either fully present or absent. On open,
// a torn final line left by a crash is truncated away.
class JsonlAppender {
 public:
  explicit JsonlAppender(std::filesystem::path path);
  ~JsonlAppender();
  JsonlAppender(const JsonlAppender&) = delete;
  JsonlAppender& operator=(const JsonlAppender&) = delete;

  void append(const nlohmann::json& record);
  void append_line(std::string_view line);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mu_;
};

struct JsonlReadResult {
  std::vector<nlohmann::json> records;
  bool torn_tail = false;  // last line was incomplete and skipped
};

// Reads every JSON line, skipping blank lines and export headers. An
// unparseable final line is treated as a torn write; anywhere else it
// raises SchemaError.
JsonlReadResult read_jsonl(const std::filesystem::path& path);

// Export header line: {"schema": ..., "schema_version": ..., "type": "header"}.
nlohmann::json export_header(std::string_view schema, int version);
bool is_export_header(const nlohmann::json& record);

// Writes `header` then `rows` to `<path>.partial` and renames it over
// `path` on success. A failure leaves the .partial file as the marker.
void write_jsonl_export(const std::filesystem::path& path, const nlohmann::json& header,
                        const std::vector<nlohmann::json>& rows);

}  // namespace vrloop
