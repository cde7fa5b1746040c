#include "capdistill/corpus.hpp"

#include <unistd.h>

#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>
#include <system_error>

#include "capdistill/hash.hpp"

namespace capdistill {

namespace fs = std::filesystem;

std::string_view to_string(Source s) { return s == Source::laion ? "laion" : "vflan"; }

Source source_from_string(std::string_view s) {
  if (s == "laion") return Source::laion;
  if (s == "vflan") return Source::vflan;
  throw std::invalid_argument("unknown source '" + std::string(s) + "'");
}

CorpusError CorpusError::missing_field(std::size_t line_no, std::string field) {
  const std::string what = "line " + std::to_string(line_no) + ": missing field '" + field + "'";
  return {Kind::missing_field, line_no, std::move(field), what};
}

CorpusError CorpusError::duplicate_id(std::string id) {
  const std::string what = "duplicate id '" + id + "'";
  return {Kind::duplicate_id, 0, std::move(id), what};
}

CorpusError CorpusError::malformed_line(std::size_t line_no, std::string detail) {
  const std::string what = "line " + std::to_string(line_no) + ": malformed (" + detail + ")";
  return {Kind::malformed_line, line_no, std::move(detail), what};
}

CorpusError CorpusError::invariant_violation(std::size_t index, std::string reason) {
  const std::string what = "record " + std::to_string(index) + ": " + reason;
  return {Kind::invariant_violation, index, std::move(reason), what};
}

CorpusError CorpusError::io_error(std::string detail) {
  const std::string what = "io error: " + detail;
  return {Kind::io_error, 0, std::move(detail), what};
}

namespace detail {

const Json& require(const Json& row, std::size_t line_no, const char* field) {
  auto it = row.find(field);
  if (it == row.end() || it->is_null()) throw CorpusError::missing_field(line_no, field);
  return *it;
}

std::string require_string(const Json& row, std::size_t line_no, const char* field) {
  const Json& v = require(row, line_no, field);
  if (!v.is_string()) {
    throw CorpusError::malformed_line(line_no, std::string("field '") + field + "' is not a string");
  }
  return v.get<std::string>();
}

std::int64_t require_int(const Json& row, std::size_t line_no, const char* field) {
  const Json& v = require(row, line_no, field);
  if (!v.is_number_integer()) {
    throw CorpusError::malformed_line(line_no, std::string("field '") + field + "' is not an integer");
  }
  return v.get<std::int64_t>();
}

std::optional<std::string> optional_string(const Json& row, std::size_t line_no, const char* field) {
  auto it = row.find(field);
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw CorpusError::malformed_line(line_no, std::string("field '") + field + "' is not a string");
  }
  return it->get<std::string>();
}

std::vector<std::string> string_list(const Json& value, std::size_t line_no, const char* field) {
  if (!value.is_array()) {
    throw CorpusError::malformed_line(line_no, std::string("field '") + field + "' is not a list");
  }
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& v : value) {
    if (!v.is_string()) {
      throw CorpusError::malformed_line(line_no, std::string("field '") + field + "' has a non-string entry");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

using detail::optional_string;
using detail::require;
using detail::require_int;
using detail::require_string;

Json to_json(const Provenance& p) {
  Json j;
  j["model_id"] = p.model_id;
  j["prompt_id"] = p.prompt_id;
  j["timestamp_utc"] = p.timestamp_utc;
  j["raw_digest"] = p.raw_digest;
  return j;
}

Provenance provenance_from_json(const Json& row, std::size_t line_no) {
  const Json& p = require(row, line_no, "provenance");
  if (!p.is_object()) throw CorpusError::malformed_line(line_no, "field 'provenance' is not an object");
  return Provenance{require_string(p, line_no, "model_id"), require_string(p, line_no, "prompt_id"),
                    require_string(p, line_no, "timestamp_utc"), require_string(p, line_no, "raw_digest")};
}

Json to_json(const ImageMeta& r) {
  Json j;
  j["id"] = r.id;
  j["url"] = r.url;
  j["width"] = r.width;
  j["height"] = r.height;
  j["alt_caption"] = r.alt_caption;
  if (r.local_path) j["local_path"] = *r.local_path;
  if (r.content_sha256) j["content_sha256"] = *r.content_sha256;
  return j;
}

Json to_json(const VflanItem& r) {
  Json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["category"] = r.category;
  j["question"] = r.question;
  j["gt_answer"] = r.gt_answer;
  return j;
}

Json to_json(const CaptionRecord& r) {
  Json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["caption"] = r.caption;
  j["source"] = to_string(r.source);
  j["provenance"] = to_json(r.provenance);
  return j;
}

Json to_json(const InstructRecord& r) {
  Json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["question"] = r.question;
  j["answer"] = r.answer;
  if (r.candidate_questions) j["candidate_questions"] = *r.candidate_questions;
  j["source"] = to_string(r.source);
  j["flags"] = r.flags;
  j["provenance"] = to_json(r.provenance);
  return j;
}

namespace {

Source parse_source(const Json& row, std::size_t line_no) {
  const std::string s = require_string(row, line_no, "source");
  try {
    return source_from_string(s);
  } catch (const std::invalid_argument&) {
    throw CorpusError::malformed_line(line_no, "unknown source '" + s + "'");
  }
}

}  // namespace

void from_json_row(const Json& row, std::size_t line_no, ImageMeta& out) {
  out.id = require_string(row, line_no, "id");
  out.url = require_string(row, line_no, "url");
  out.width = require_int(row, line_no, "width");
  out.height = require_int(row, line_no, "height");
  out.alt_caption = require_string(row, line_no, "alt_caption");
  out.local_path = optional_string(row, line_no, "local_path");
  out.content_sha256 = optional_string(row, line_no, "content_sha256");
}

void from_json_row(const Json& row, std::size_t line_no, VflanItem& out) {
  out.id = require_string(row, line_no, "id");
  out.image_ref = require_string(row, line_no, "image_ref");
  out.category = require_string(row, line_no, "category");
  out.question = require_string(row, line_no, "question");
  out.gt_answer = require_string(row, line_no, "gt_answer");
}

void from_json_row(const Json& row, std::size_t line_no, CaptionRecord& out) {
  out.id = require_string(row, line_no, "id");
  out.image_ref = require_string(row, line_no, "image_ref");
  out.caption = require_string(row, line_no, "caption");
  out.source = parse_source(row, line_no);
  out.provenance = provenance_from_json(row, line_no);
}

void from_json_row(const Json& row, std::size_t line_no, InstructRecord& out) {
  out.id = require_string(row, line_no, "id");
  out.image_ref = require_string(row, line_no, "image_ref");
  out.question = require_string(row, line_no, "question");
  out.answer = require_string(row, line_no, "answer");
  if (auto it = row.find("candidate_questions"); it != row.end() && !it->is_null()) {
    out.candidate_questions = detail::string_list(*it, line_no, "candidate_questions");
  } else {
    out.candidate_questions.reset();
  }
  out.source = parse_source(row, line_no);
  if (auto it = row.find("flags"); it != row.end() && !it->is_null()) {
    out.flags = detail::string_list(*it, line_no, "flags");
  } else {
    out.flags.clear();
  }
  out.provenance = provenance_from_json(row, line_no);
}

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) return false;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace

bool is_rfc3339(std::string_view s) {
  if (!(digits(s, 0, 4) && s.size() > 19 && s[4] == '-' && digits(s, 5, 2) && s[7] == '-' &&
        digits(s, 8, 2) && (s[10] == 'T' || s[10] == 't') && digits(s, 11, 2) && s[13] == ':' &&
        digits(s, 14, 2) && s[16] == ':' && digits(s, 17, 2))) {
    return false;
  }
  std::size_t pos = 19;
  if (s[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == start) return false;
  }
  if (pos >= s.size()) return false;
  if ((s[pos] == 'Z' || s[pos] == 'z') && pos + 1 == s.size()) return true;
  return (s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && digits(s, pos + 1, 2) &&
         s[pos + 3] == ':' && digits(s, pos + 4, 2);
}

std::vector<std::string> validate_provenance(const Provenance& p) {
  std::vector<std::string> v;
  if (p.model_id.empty()) v.emplace_back("provenance.model_id empty");
  if (p.prompt_id.empty()) v.emplace_back("provenance.prompt_id empty");
  if (!is_rfc3339(p.timestamp_utc)) v.emplace_back("provenance.timestamp_utc not RFC 3339");
  if (!is_sha256_hex(p.raw_digest)) v.emplace_back("provenance.raw_digest not 64 lowercase hex");
  return v;
}

std::vector<std::string> validate_record(const ImageMeta& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.emplace_back("id empty");
  if (r.width < 1) v.emplace_back("width < 1");
  if (r.height < 1) v.emplace_back("height < 1");
  if (r.local_path.has_value() != r.content_sha256.has_value()) {
    v.emplace_back("content_sha256 must be present iff local_path is present");
  }
  if (r.content_sha256 && !is_sha256_hex(*r.content_sha256)) {
    v.emplace_back("content_sha256 not 64 lowercase hex");
  }
  return v;
}

std::vector<std::string> validate_record(const VflanItem& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.emplace_back("id empty");
  if (r.category.empty()) v.emplace_back("category empty");
  if (r.question.empty()) v.emplace_back("question empty");
  return v;
}

std::vector<std::string> validate_record(const CaptionRecord& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.emplace_back("id empty");
  if (r.caption.empty()) v.emplace_back("caption empty");
  for (auto& p : validate_provenance(r.provenance)) v.push_back(std::move(p));
  return v;
}

std::vector<std::string> validate_record(const InstructRecord& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.emplace_back("id empty");
  if (r.question.empty()) v.emplace_back("question empty");
  if (r.answer.empty()) v.emplace_back("answer empty");
  if (r.source == Source::vflan && r.candidate_questions) {
    v.emplace_back("candidate_questions present for vflan");
  }
  for (auto& p : validate_provenance(r.provenance)) v.push_back(std::move(p));
  return v;
}

std::vector<std::pair<std::size_t, Json>> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError::io_error("cannot open " + path.string());
  std::vector<std::pair<std::size_t, Json>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json row = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (row.is_discarded()) throw CorpusError::malformed_line(line_no, "invalid JSON");
    if (!row.is_object()) throw CorpusError::malformed_line(line_no, "not a JSON object");
    rows.emplace_back(line_no, std::move(row));
  }
  if (in.bad()) throw CorpusError::io_error("read failed for " + path.string());
  return rows;
}

std::string dump_line(const Json& j) {
  std::string s = j.dump(-1, ' ', false, Json::error_handler_t::replace);
  s.push_back('\n');
  return s;
}

void atomic_write(const fs::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError::io_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw CorpusError::io_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw CorpusError::io_error("rename to " + path.string() + " failed: " + ec.message());
  }
}

}  // namespace capdistill
