#pragma once

// Drives the vision-language endpoint: one request per (image, prompt),
// retried per RetryPolicy, with bounded concurrency, a shared request-start
// limiter and resumable, input-ordered output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "capdistill/clock.hpp"
#include "capdistill/corpus.hpp"
#include "capdistill/lvlm.hpp"
#include "capdistill/retry.hpp"

namespace capdistill {

enum class ExchangeStatus { ok, refused_by_policy, failed };

std::string_view to_string(ExchangeStatus s);
ExchangeStatus exchange_status_from_string(std::string_view s);

struct RawExchange {
  std::string item_id;
  std::string prompt_id;
  std::string image_ref;
  std::string request_digest;
  std::string response_text;
  ExchangeStatus status = ExchangeStatus::failed;
  int attempts = 0;
  std::int64_t latency_ms = 0;
  std::string model_id;
  int last_status = 0;
  std::string error;
  std::string completed_at;

  bool operator==(const RawExchange&) const = default;
};

Json to_json(const RawExchange& r);
void from_json_row(const Json& row, std::size_t line_no, RawExchange& out);
std::vector<std::string> validate_record(const RawExchange& r);
inline std::string_view record_id(const RawExchange& r) { return r.item_id; }

/// One unit of work: the rendered prompt plus where its image lives.
struct DistillItem {
  std::string item_id;
  std::string image_ref;  // local path, or URL when URL pass-through is on
  std::string prompt;
  std::string prompt_id;
};

std::vector<DistillItem> make_items(std::span<const ImageMeta> images, bool use_urls = false);
std::vector<DistillItem> make_items(std::span<const VflanItem> items);

/// sha256 over length-prefixed prompt, image bytes and model id.
std::string request_digest(std::string_view prompt, std::string_view image_bytes, std::string_view model_id);

struct DistillOptions {
  RetryPolicy policy;
  Clock* clock = &SteadyClock::instance();
  TokenBucket* limiter = nullptr;
  bool send_image_urls = false;
  /// Substrings of an error body that mark a content-policy refusal.
  std::vector<std::string> refusal_markers{"content_policy", "content_filter", "safety system"};
  /// Called just before each request with the attempt number and the start
  /// time granted by the limiter (or the clock's time without one).
  std::function<void(const DistillItem&, int attempt, Clock::duration start)> on_attempt;
};

/// Never throws for endpoint failures; they surface as status=failed with
/// the last HTTP status and attempt count.
RawExchange distill_one(LvlmClient& client, const DistillItem& item, const DistillOptions& options);

struct BatchOptions {
  DistillOptions distill;
  int concurrency = 4;
  int rpm = 60;
  std::optional<std::filesystem::path> resume_from;
};

struct BatchSummary {
  std::size_t total = 0;
  std::size_t ok = 0;
  std::size_t refused = 0;
  std::size_t failed = 0;
  std::size_t resumed = 0;
  std::size_t requests = 0;

  Json to_json() const;
};

/// Item ids already present in a prior exchange log (missing file = none).
std::unordered_set<std::string> load_resume_ids(const std::filesystem::path& path);

/// Calls `sink` once per non-resumed item, in input order.
BatchSummary distill_batch(LvlmClient& client, std::span<const DistillItem> items, const BatchOptions& options,
                           const std::function<void(const RawExchange&)>& sink);

}  // namespace capdistill
