#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "capdistill/corpus.hpp"

namespace capdistill {

enum class Stage { pretrain, finetune };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

struct MixEntry {
  std::string dataset_id;
  std::filesystem::path path;
  std::uint64_t count = 0;
  std::uint32_t epochs = 1;
};

struct MixSpec {
  Stage stage = Stage::pretrain;
  std::vector<MixEntry> entries;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on zero counts/epochs or repeated ids.
  void validate() const;
  std::uint64_t expected_total() const;
};

/// `dataset` indexes MixSpec::entries; the id is resolved through the spec.
struct MixEntryRef {
  std::uint32_t dataset = 0;
  std::uint64_t record_index = 0;
  std::uint32_t copy = 0;

  bool operator==(const MixEntryRef&) const = default;
};

/// Parses {"stage", "seed", "entries": [{"dataset_id", "path", "count"?, "epochs"}]}.
/// A missing count is filled with the number of records in `path`
/// (resolved against `base_dir`).
MixSpec load_mix_spec(const std::filesystem::path& path);
MixSpec mix_spec_from_json(const Json& j, const std::filesystem::path& base_dir);

/// Every (dataset, index, copy) triple exactly once, in canonical order
/// (entry, copy, index), then Fisher-Yates shuffled with Xoshiro256(seed).
std::vector<MixEntryRef> compose_mix(const MixSpec& spec);

struct MixDatasetCount {
  std::string dataset_id;
  std::uint64_t expected = 0;
  std::uint64_t observed = 0;
};

struct MixVerification {
  bool pass = false;
  std::uint64_t expected_total = 0;
  std::uint64_t observed_total = 0;
  std::vector<MixDatasetCount> per_dataset;
  std::vector<MixEntryRef> missing;     // first few only
  std::vector<MixEntryRef> duplicated;  // first few only
  std::uint64_t missing_count = 0;
  std::uint64_t duplicate_count = 0;
  std::uint64_t out_of_range_count = 0;

  Json to_json(const MixSpec& spec) const;
};

MixVerification verify_mix(std::span<const MixEntryRef> refs, const MixSpec& spec);

Json to_json(const MixEntryRef& ref, const MixSpec& spec);
/// Throws CorpusError on unknown dataset ids or missing fields.
MixEntryRef mix_ref_from_json(const Json& row, std::size_t line_no, const MixSpec& spec);

void write_mix(std::span<const MixEntryRef> refs, const MixSpec& spec, const std::filesystem::path& path);
std::vector<MixEntryRef> load_mix(const std::filesystem::path& path, const MixSpec& spec);

/// Writes the referenced source lines in mix order, one record per line.
std::size_t materialize_mix(std::span<const MixEntryRef> refs, const MixSpec& spec,
                            const std::filesystem::path& out_path);

}  // namespace capdistill
