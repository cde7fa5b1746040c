#pragma once

// Image selection: resolution filter, URL blocklist, content-addressed
// download, and greedy near-duplicate removal over caption embeddings.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capdistill/corpus.hpp"
#include "capdistill/embedding.hpp"
#include "capdistill/http.hpp"
#include "capdistill/retry.hpp"

namespace capdistill {

template <typename T>
struct Partition {
  std::vector<T> kept;
  std::vector<T> rejected;
};

/// Keeps images whose width AND height strictly exceed `min_dim`.
Partition<ImageMeta> filter_resolution(std::span<const ImageMeta> images, std::int64_t min_dim = 512);

enum class BlocklistMode { substring, regex };

/// Rejects images whose lowercased URL contains any lowercased pattern
/// (or, in regex mode, matches any case-insensitive ECMAScript pattern).
Partition<ImageMeta> filter_blocklist(std::span<const ImageMeta> images, std::span<const std::string> patterns,
                                      BlocklistMode mode = BlocklistMode::substring);

/// One pattern per line; blank lines and lines starting with '#' skipped.
std::vector<std::string> load_pattern_file(const std::filesystem::path& path);
std::vector<std::string> parse_pattern_lines(std::string_view text);

struct FetchOptions {
  RetryPolicy policy;
  int concurrency = 4;
  Clock* clock = &SteadyClock::instance();
  TokenBucket* limiter = nullptr;
  /// Image hosts and CDNs often report transient trouble as 403/404, so by
  /// default every non-200 answer is retried up to policy.max_attempts.
  /// When false, only the policy's retryable statuses are.
  bool retry_all_errors = true;
};

struct FetchFailure {
  std::string id;
  std::string url;
  int last_status = 0;  // 0 = transport error
  std::string error;
  int attempts = 0;
};

struct FetchResult {
  std::vector<ImageMeta> fetched;  // input order
  std::vector<FetchFailure> failures;
  std::size_t requests_issued = 0;
};

/// Downloads each image to out_dir/<sha256>.<ext>. Images that already carry
/// a local_path pointing at an existing file are passed through untouched.
/// Throws CorpusError::io_error only when out_dir is unusable.
FetchResult fetch_images(std::span<const ImageMeta> images, const std::filesystem::path& out_dir,
                         HttpTransport& transport, const FetchOptions& options = {});

struct DedupConfig {
  double tau = 0.44;
  bool normalize = true;
  /// 0 picks automatically: exact scalar scan up to 50k items, blocked
  /// matrix products of 1024 rows above that. Both give the same survivors.
  std::size_t block_size = 0;

  void validate() const;
};

struct DedupRemoval {
  std::string id;
  std::string witness_id;
  double similarity = 0.0;
};

struct DedupResult {
  std::vector<std::string> retained;
  std::vector<DedupRemoval> removed;
};

class DimMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Greedy first-wins scan in input order: item i is kept iff its largest dot
/// product with every already-kept item is <= tau. Removed items carry the
/// kept item of highest similarity (earliest on ties).
DedupResult dedup_by_similarity(std::span<const std::string> ids, std::span<const EmbeddingVector> vectors,
                                const DedupConfig& cfg);

struct CurationRejection {
  std::string id;
  std::string reason;  // "resolution" | "blocklist" | "duplicate" | "fetch"
  std::optional<std::string> witness_id;
  std::optional<double> similarity;
  std::string detail;
};

/// input_count = kept + rejected_resolution + rejected_blocklist + rejected_duplicate,
/// plus fetch_failures when fetching is mandatory (failed items are then dropped).
struct CurationReport {
  std::size_t input_count = 0;
  std::size_t kept_count = 0;
  std::size_t rejected_resolution = 0;
  std::size_t rejected_blocklist = 0;
  std::size_t rejected_duplicate = 0;
  std::size_t fetch_failures = 0;
  bool fetch_mandatory = false;
  std::vector<CurationRejection> rejections;

  bool balanced() const;
  Json to_json() const;
};

struct CurationOptions {
  std::int64_t min_dim = 512;
  std::vector<std::string> blocklist;
  BlocklistMode blocklist_mode = BlocklistMode::substring;
  bool fetch = false;
  bool fetch_mandatory = false;
  std::filesystem::path image_dir = "images";
  FetchOptions fetch_options;
  bool dedup = true;
  bool dedup_before_fetch = false;
  DedupConfig dedup_config;
  EmbedOptions embed_options;
};

struct CurationOutcome {
  std::vector<ImageMeta> kept;
  CurationReport report;
};

/// resolution -> blocklist -> fetch -> dedup (or dedup before fetch when
/// configured). `provider` is required when dedup is on, `transport` when
/// fetch is on.
CurationOutcome run_curation(std::span<const ImageMeta> images, const CurationOptions& options,
                             EmbeddingProvider* provider, HttpTransport* transport);

}  // namespace capdistill
