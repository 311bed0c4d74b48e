#include "vrloop/jsonl.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vrloop/errors.hpp"

namespace vrloop {

namespace {

std::string errno_message(const std::string& what) { return what + ": " + std::strerror(errno); }

// Drops bytes after the last newline.
void repair_tail(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size == 0) return;
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!content.empty() && content.back() == '\n') return;
  const auto nl = content.rfind('\n');
  const auto keep = nl == std::string::npos ? 0 : nl + 1;
  std::filesystem::resize_file(path, keep);
}

}  // namespace

JsonlAppender::JsonlAppender(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) repair_tail(path_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError(errno_message("cannot open " + path_.string()));
}

JsonlAppender::~JsonlAppender() {
  if (fd_ >= 0) ::close(fd_);
}

void JsonlAppender::append(const nlohmann::json& record) { append_line(record.dump()); }

void JsonlAppender::append_line(std::string_view line) {
  std::string buf(line);
  buf.push_back('\n');
  std::lock_guard lock(mu_);
  const char* data = buf.data();
  std::size_t left = buf.size();
  while (left > 0) {
    const auto n = ::write(fd_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(errno_message("write failed on " + path_.string()));
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
}

JsonlReadResult read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  JsonlReadResult result;
  std::size_t start = 0;
  std::size_t lineno = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    const bool last = nl == std::string::npos;
    if (last) nl = content.size();
    const std::string_view line(content.data() + start, nl - start);
    ++lineno;
    start = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    if (last) {
      // No newline: a torn append unless it parses cleanly.
      try {
        auto j = nlohmann::json::parse(line);
        if (!is_export_header(j)) result.records.push_back(std::move(j));
      } catch (const nlohmann::json::exception&) {
        result.torn_tail = true;
      }
      break;
    }
    try {
      auto j = nlohmann::json::parse(line);
      if (!is_export_header(j)) result.records.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return result;
}

nlohmann::json export_header(std::string_view schema, int version) {
  return nlohmann::json{{"schema", schema}, {"schema_version", version}, {"type", "header"}};
}

bool is_export_header(const nlohmann::json& record) {
  return record.is_object() && record.contains("type") && record["type"] == "header";
}

void write_jsonl_export(const std::filesystem::path& path, const nlohmann::json& header,
                        const std::vector<nlohmann::json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + partial.string());
    out << header.dump() << '\n';
    for (const auto& row : rows) {
      out << row.dump() << '\n';
      if (!out) throw IoError("write failed on " + partial.string());
    }
    out.flush();
    if (!out) throw IoError("flush failed on " + partial.string());
  }
  std::filesystem::rename(partial, path);
}

}  // namespace vrloop
