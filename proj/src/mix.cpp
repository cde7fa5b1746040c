#include "capdistill/mix.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "capdistill/rng.hpp"

namespace capdistill {

namespace fs = std::filesystem;

namespace {
constexpr std::size_t kReportLimit = 20;
}

std::string_view to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

Stage stage_from_string(std::string_view s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "finetune") return Stage::finetune;
  throw std::invalid_argument("unknown stage '" + std::string(s) + "'");
}

void MixSpec::validate() const {
  std::unordered_set<std::string> ids;
  if (entries.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("too many entries");
  for (const auto& e : entries) {
    if (e.dataset_id.empty()) throw std::invalid_argument("empty dataset_id");
    if (!ids.insert(e.dataset_id).second) throw std::invalid_argument("duplicate dataset_id '" + e.dataset_id + "'");
    if (e.count == 0) throw std::invalid_argument("count must be > 0 for '" + e.dataset_id + "'");
    if (e.epochs == 0) throw std::invalid_argument("epochs must be >= 1 for '" + e.dataset_id + "'");
  }
}

std::uint64_t MixSpec::expected_total() const {
  std::uint64_t total = 0;
  for (const auto& e : entries) total += e.count * e.epochs;
  return total;
}

namespace {

std::uint64_t count_records(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError::io_error("cannot open " + path.string());
  std::uint64_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) ++n;
  }
  return n;
}

}  // namespace

MixSpec mix_spec_from_json(const Json& j, const fs::path& base_dir) {
  MixSpec spec;
  spec.stage = stage_from_string(j.at("stage").get<std::string>());
  spec.seed = j.value("seed", std::uint64_t{0});
  for (const auto& e : j.at("entries")) {
    MixEntry entry;
    entry.dataset_id = e.at("dataset_id").get<std::string>();
    if (e.contains("path")) {
      entry.path = e["path"].get<std::string>();
      if (entry.path.is_relative()) entry.path = base_dir / entry.path;
    }
    if (e.contains("count")) {
      entry.count = e["count"].get<std::uint64_t>();
    } else if (!entry.path.empty()) {
      entry.count = count_records(entry.path);
    }
    entry.epochs = e.value("epochs", std::uint32_t{1});
    spec.entries.push_back(std::move(entry));
  }
  spec.validate();
  return spec;
}

MixSpec load_mix_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError::io_error("cannot open " + path.string());
  const Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("mix spec is not valid JSON: " + path.string());
  return mix_spec_from_json(j, path.parent_path());
}

std::vector<MixEntryRef> compose_mix(const MixSpec& spec) {
  spec.validate();
  std::vector<MixEntryRef> refs;
  refs.reserve(spec.expected_total());
  for (std::uint32_t d = 0; d < spec.entries.size(); ++d) {
    const MixEntry& e = spec.entries[d];
    for (std::uint32_t copy = 0; copy < e.epochs; ++copy) {
      for (std::uint64_t i = 0; i < e.count; ++i) refs.push_back({d, i, copy});
    }
  }
  Xoshiro256 rng(spec.seed);
  fisher_yates_shuffle(std::span<MixEntryRef>(refs), rng);
  return refs;
}

MixVerification verify_mix(std::span<const MixEntryRef> refs, const MixSpec& spec) {
  MixVerification v;
  v.expected_total = spec.expected_total();
  v.observed_total = refs.size();

  // One seen-bit per expected triple, laid out entry by entry.
  std::vector<std::uint64_t> offset(spec.entries.size() + 1, 0);
  for (std::size_t d = 0; d < spec.entries.size(); ++d) {
    offset[d + 1] = offset[d] + spec.entries[d].count * spec.entries[d].epochs;
    v.per_dataset.push_back({spec.entries[d].dataset_id, spec.entries[d].count * spec.entries[d].epochs, 0});
  }
  std::vector<bool> seen(offset.back(), false);
  for (const auto& r : refs) {
    if (r.dataset >= spec.entries.size() || r.record_index >= spec.entries[r.dataset].count ||
        r.copy >= spec.entries[r.dataset].epochs) {
      ++v.out_of_range_count;
      continue;
    }
    ++v.per_dataset[r.dataset].observed;
    const std::uint64_t slot = offset[r.dataset] + r.copy * spec.entries[r.dataset].count + r.record_index;
    if (seen[slot]) {
      ++v.duplicate_count;
      if (v.duplicated.size() < kReportLimit) v.duplicated.push_back(r);
    }
    seen[slot] = true;
  }
  for (std::uint32_t d = 0; d < spec.entries.size(); ++d) {
    const MixEntry& e = spec.entries[d];
    for (std::uint32_t copy = 0; copy < e.epochs; ++copy) {
      for (std::uint64_t i = 0; i < e.count; ++i) {
        if (!seen[offset[d] + copy * e.count + i]) {
          ++v.missing_count;
          if (v.missing.size() < kReportLimit) v.missing.push_back({d, i, copy});
        }
      }
    }
  }
  v.pass = v.missing_count == 0 && v.duplicate_count == 0 && v.out_of_range_count == 0 &&
           v.observed_total == v.expected_total;
  return v;
}

Json to_json(const MixEntryRef& ref, const MixSpec& spec) {
  Json j;
  j["dataset_id"] = spec.entries.at(ref.dataset).dataset_id;
  j["record_index"] = ref.record_index;
  j["copy"] = ref.copy;
  return j;
}

Json MixVerification::to_json(const MixSpec& spec) const {
  Json j;
  j["pass"] = pass;
  j["expected_total"] = expected_total;
  j["observed_total"] = observed_total;
  j["missing_count"] = missing_count;
  j["duplicate_count"] = duplicate_count;
  j["out_of_range_count"] = out_of_range_count;
  j["per_dataset"] = Json::array();
  for (const auto& d : per_dataset) {
    Json row;
    row["dataset_id"] = d.dataset_id;
    row["expected"] = d.expected;
    row["observed"] = d.observed;
    j["per_dataset"].push_back(std::move(row));
  }
  j["missing"] = Json::array();
  for (const auto& r : missing) j["missing"].push_back(capdistill::to_json(r, spec));
  j["duplicated"] = Json::array();
  for (const auto& r : duplicated) j["duplicated"].push_back(capdistill::to_json(r, spec));
  return j;
}

MixEntryRef mix_ref_from_json(const Json& row, std::size_t line_no, const MixSpec& spec) {
  const std::string id = detail::require_string(row, line_no, "dataset_id");
  const std::int64_t index = detail::require_int(row, line_no, "record_index");
  const std::int64_t copy = detail::require_int(row, line_no, "copy");
  if (index < 0 || copy < 0) throw CorpusError::malformed_line(line_no, "negative index or copy");
  for (std::uint32_t d = 0; d < spec.entries.size(); ++d) {
    if (spec.entries[d].dataset_id == id) {
      return {d, static_cast<std::uint64_t>(index), static_cast<std::uint32_t>(copy)};
    }
  }
  throw CorpusError::malformed_line(line_no, "unknown dataset_id '" + id + "'");
}

void write_mix(std::span<const MixEntryRef> refs, const MixSpec& spec, const fs::path& path) {
  std::string content;
  content.reserve(refs.size() * 48);
  for (const auto& r : refs) content += dump_line(to_json(r, spec));
  atomic_write(path, content);
}

std::vector<MixEntryRef> load_mix(const fs::path& path, const MixSpec& spec) {
  std::vector<MixEntryRef> refs;
  for (const auto& [line_no, row] : read_jsonl(path)) refs.push_back(mix_ref_from_json(row, line_no, spec));
  return refs;
}

std::size_t materialize_mix(std::span<const MixEntryRef> refs, const MixSpec& spec, const fs::path& out_path) {
  std::vector<std::vector<std::string>> sources(spec.entries.size());
  for (std::size_t d = 0; d < spec.entries.size(); ++d) {
    std::ifstream in(spec.entries[d].path, std::ios::binary);
    if (!in) throw CorpusError::io_error("cannot open " + spec.entries[d].path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) sources[d].push_back(std::move(line));
    }
    if (sources[d].size() < spec.entries[d].count) {
      throw CorpusError::io_error(spec.entries[d].path.string() + " has fewer records than its count");
    }
  }
  std::string content;
  for (const auto& r : refs) {
    content += sources.at(r.dataset).at(r.record_index);
    content.push_back('\n');
  }
  atomic_write(out_path, content);
  return refs.size();
}

}  // namespace capdistill
