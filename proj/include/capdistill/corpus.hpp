#pragma once

// Record types shared by every pipeline stage, plus JSON-lines I/O.
//
// Every record type T provides four free functions found by ADL:
//   Json to_json(const T&)                       stable key order
//   void from_json_row(const Json&, size_t, T&)  throws CorpusError
//   std::vector<std::string> validate_record(const T&)
//   std::string_view record_id(const T&)         empty when T has no id
// load_records / write_records are written once against that surface.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace capdistill {

using Json = nlohmann::ordered_json;

enum class Source { laion, vflan };

std::string_view to_string(Source s);
Source source_from_string(std::string_view s);

struct ImageMeta {
  std::string id;
  std::string url;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::string alt_caption;
  std::optional<std::string> local_path;
  std::optional<std::string> content_sha256;

  bool operator==(const ImageMeta&) const = default;
};

struct VflanItem {
  std::string id;
  std::string image_ref;
  std::string category;
  std::string question;
  std::string gt_answer;

  bool operator==(const VflanItem&) const = default;
};

struct Provenance {
  std::string model_id;
  std::string prompt_id;
  std::string timestamp_utc;
  std::string raw_digest;

  bool operator==(const Provenance&) const = default;
};

struct CaptionRecord {
  std::string id;
  std::string image_ref;
  std::string caption;
  Source source = Source::laion;
  Provenance provenance;

  bool operator==(const CaptionRecord&) const = default;
};

struct InstructRecord {
  std::string id;
  std::string image_ref;
  std::string question;
  std::string answer;
  std::optional<std::vector<std::string>> candidate_questions;
  Source source = Source::laion;
  std::vector<std::string> flags;
  Provenance provenance;

  bool operator==(const InstructRecord&) const = default;
};

class CorpusError : public std::runtime_error {
 public:
  enum class Kind { missing_field, duplicate_id, malformed_line, invariant_violation, io_error };

  static CorpusError missing_field(std::size_t line_no, std::string field);
  static CorpusError duplicate_id(std::string id);
  static CorpusError malformed_line(std::size_t line_no, std::string detail);
  static CorpusError invariant_violation(std::size_t index, std::string reason);
  static CorpusError io_error(std::string detail);

  Kind kind() const { return kind_; }
  /// 1-based line for load errors, record index for write errors.
  std::size_t position() const { return position_; }
  /// Field name, duplicated id, or violation reason depending on kind.
  const std::string& subject() const { return subject_; }

 private:
  CorpusError(Kind kind, std::size_t position, std::string subject, const std::string& what)
      : std::runtime_error(what), kind_(kind), position_(position), subject_(std::move(subject)) {}

  Kind kind_;
  std::size_t position_;
  std::string subject_;
};

// Field accessors used by from_json_row implementations across modules.
namespace detail {
const Json& require(const Json& row, std::size_t line_no, const char* field);
std::string require_string(const Json& row, std::size_t line_no, const char* field);
std::int64_t require_int(const Json& row, std::size_t line_no, const char* field);
std::optional<std::string> optional_string(const Json& row, std::size_t line_no, const char* field);
std::vector<std::string> string_list(const Json& value, std::size_t line_no, const char* field);
}  // namespace detail

Json to_json(const Provenance& p);
Provenance provenance_from_json(const Json& row, std::size_t line_no);

Json to_json(const ImageMeta& r);
Json to_json(const VflanItem& r);
Json to_json(const CaptionRecord& r);
Json to_json(const InstructRecord& r);

void from_json_row(const Json& row, std::size_t line_no, ImageMeta& out);
void from_json_row(const Json& row, std::size_t line_no, VflanItem& out);
void from_json_row(const Json& row, std::size_t line_no, CaptionRecord& out);
void from_json_row(const Json& row, std::size_t line_no, InstructRecord& out);

/// Every violated invariant, in a fixed order; empty means valid.
std::vector<std::string> validate_record(const ImageMeta& r);
std::vector<std::string> validate_record(const VflanItem& r);
std::vector<std::string> validate_record(const CaptionRecord& r);
std::vector<std::string> validate_record(const InstructRecord& r);
std::vector<std::string> validate_provenance(const Provenance& p);

/// YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)
bool is_rfc3339(std::string_view s);

inline std::string_view record_id(const ImageMeta& r) { return r.id; }
inline std::string_view record_id(const VflanItem& r) { return r.id; }
inline std::string_view record_id(const CaptionRecord& r) { return r.id; }
inline std::string_view record_id(const InstructRecord& r) { return r.id; }

/// Non-blank lines of a JSONL file as (1-based line number, parsed object).
/// Throws CorpusError::malformed_line for anything that is not a JSON object.
std::vector<std::pair<std::size_t, Json>> read_jsonl(const std::filesystem::path& path);

/// Writes `content` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string dump_line(const Json& j);

template <typename T>
std::vector<T> load_records(const std::filesystem::path& path) {
  std::vector<T> out;
  std::unordered_set<std::string> seen;
  for (auto& [line_no, row] : read_jsonl(path)) {
    T rec{};
    from_json_row(row, line_no, rec);
    if (auto violations = validate_record(rec); !violations.empty()) {
      throw CorpusError::malformed_line(line_no, violations.front());
    }
    const std::string_view id = record_id(rec);
    if (!id.empty() && !seen.emplace(id).second) throw CorpusError::duplicate_id(std::string(id));
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
std::size_t write_records(std::span<const T> records, const std::filesystem::path& path) {
  std::string content;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto violations = validate_record(records[i]);
    if (!violations.empty()) throw CorpusError::invariant_violation(i, violations.front());
    const std::string_view id = record_id(records[i]);
    if (!id.empty() && !seen.emplace(id).second) {
      throw CorpusError::invariant_violation(i, "duplicate id " + std::string(id));
    }
    content += dump_line(to_json(records[i]));
  }
  atomic_write(path, content);
  return records.size();
}

template <typename T>
std::size_t write_records(const std::vector<T>& records, const std::filesystem::path& path) {
  return write_records(std::span<const T>(records), path);
}

}  // namespace capdistill
