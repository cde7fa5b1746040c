#pragma once

// Manual-inspection workflow: pick a category-stratified sample, generate
// answers under each ablation mode, let a person grade them, then tally.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capdistill/corpus.hpp"
#include "capdistill/distill.hpp"
#include "capdistill/lvlm.hpp"

namespace capdistill {

enum class InspectMode { vflan_gt, direct_answer, caption_then_answer };
enum class Verdict { correct, incorrect, unsure, ungraded };

std::string_view to_string(InspectMode m);
/// Accepts the full names plus the short forms "gt", "direct" and "caption".
InspectMode inspect_mode_from_string(std::string_view s);
std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);

struct InspectionRecord {
  std::string sample_id;
  InspectMode mode = InspectMode::vflan_gt;
  std::string answer_text;
  Verdict verdict = Verdict::ungraded;
  std::string inspector;
  std::string graded_at;  // empty while ungraded
  std::string question;
  std::string gt_answer;
  std::string prompt_id;  // template that produced answer_text; empty for vflan_gt
  std::string note;       // failure detail when generation or parsing failed

  bool operator==(const InspectionRecord&) const = default;
};

Json to_json(const InspectionRecord& r);
void from_json_row(const Json& row, std::size_t line_no, InspectionRecord& out);
std::vector<std::string> validate_record(const InspectionRecord& r);

/// Annotation logs are append-only and hold several rows per sample, so
/// they are read without the duplicate-id check.
std::vector<InspectionRecord> load_annotations(const std::filesystem::path& path);
void append_annotations(std::span<const InspectionRecord> records, const std::filesystem::path& path);

class NotEnoughItems : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-category quotas for a sample of n: an equal share with the residue
/// handed out by largest remainder (ties by category name). Categories
/// smaller than their share give all they have and the shortfall is
/// redistributed among the rest by the same rule.
std::map<std::string, std::size_t> stratified_quotas(const std::map<std::string, std::size_t>& category_sizes,
                                                     std::size_t n);

/// Throws NotEnoughItems when fewer than n items exist.
std::vector<std::string> sample_stratified(std::span<const VflanItem> items, std::size_t n, std::uint64_t seed);

struct AblationResult {
  std::vector<InspectionRecord> records;  // grouped by mode, samples in input order
  std::size_t requests = 0;
  std::size_t failures = 0;
};

/// One ungraded record per (sample, mode). vflan_gt copies the ground truth
/// and issues no request.
AblationResult run_ablation(LvlmClient& client, std::span<const VflanItem> samples,
                            const std::set<InspectMode>& modes, const BatchOptions& options);

struct GradeSummary {
  std::size_t graded = 0;
  std::size_t skipped = 0;
  bool quit = false;
};

/// Presents each ungraded record on `out`, reads one of c / i / u / s(kip) /
/// q(uit) per line from `in` and hands each new verdict to `sink`.
GradeSummary grade(std::span<const InspectionRecord> pending, std::istream& in, std::ostream& out,
                   const std::string& inspector, const std::function<void(const InspectionRecord&)>& sink);

/// Latest row per (sample_id, mode), in order of first appearance.
std::vector<InspectionRecord> resolve_annotations(std::span<const InspectionRecord> log);

class NoGradedRecords : public std::runtime_error {
 public:
  explicit NoGradedRecords(InspectMode mode);
  InspectMode mode() const { return mode_; }

 private:
  InspectMode mode_;
};

struct ModeAccuracy {
  std::size_t graded = 0;  // correct + incorrect
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  std::size_t excluded_unsure = 0;
  double accuracy = 0.0;  // correct / graded * 100
};

struct AccuracyReport {
  std::map<InspectMode, ModeAccuracy> per_mode;
  std::size_t excluded_unsure = 0;

  Json to_json() const;
};

/// Unsure verdicts leave the denominator unless include_unsure, which
/// counts them as incorrect. Ungraded rows are ignored. Every mode that
/// appears in `records` must have at least one graded row.
AccuracyReport tally_accuracy(std::span<const InspectionRecord> records, bool include_unsure = false);

/// One decimal place, e.g. "84.0".
std::string format_accuracy(double pct);

}  // namespace capdistill
