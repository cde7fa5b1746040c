#include "capdistill/distill.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>

#include "capdistill/hash.hpp"
#include "capdistill/parallel.hpp"
#include "capdistill/prompts.hpp"

namespace capdistill {

namespace fs = std::filesystem;

std::string_view to_string(ExchangeStatus s) {
  switch (s) {
    case ExchangeStatus::ok:
      return "ok";
    case ExchangeStatus::refused_by_policy:
      return "refused_by_policy";
    case ExchangeStatus::failed:
      return "failed";
  }
  return "failed";
}

ExchangeStatus exchange_status_from_string(std::string_view s) {
  if (s == "ok") return ExchangeStatus::ok;
  if (s == "refused_by_policy") return ExchangeStatus::refused_by_policy;
  if (s == "failed") return ExchangeStatus::failed;
  throw std::invalid_argument("unknown exchange status '" + std::string(s) + "'");
}

Json to_json(const RawExchange& r) {
  Json j;
  j["item_id"] = r.item_id;
  j["prompt_id"] = r.prompt_id;
  j["image_ref"] = r.image_ref;
  j["request_digest"] = r.request_digest;
  j["response_text"] = r.response_text;
  j["status"] = to_string(r.status);
  j["attempts"] = r.attempts;
  j["latency_ms"] = r.latency_ms;
  j["model_id"] = r.model_id;
  j["last_status"] = r.last_status;
  j["error"] = r.error;
  j["completed_at"] = r.completed_at;
  return j;
}

void from_json_row(const Json& row, std::size_t line_no, RawExchange& out) {
  using namespace detail;
  out.item_id = require_string(row, line_no, "item_id");
  out.prompt_id = require_string(row, line_no, "prompt_id");
  out.image_ref = require_string(row, line_no, "image_ref");
  out.request_digest = require_string(row, line_no, "request_digest");
  out.response_text = require_string(row, line_no, "response_text");
  const std::string status = require_string(row, line_no, "status");
  try {
    out.status = exchange_status_from_string(status);
  } catch (const std::invalid_argument&) {
    throw CorpusError::malformed_line(line_no, "unknown status '" + status + "'");
  }
  out.attempts = static_cast<int>(require_int(row, line_no, "attempts"));
  out.latency_ms = require_int(row, line_no, "latency_ms");
  out.model_id = require_string(row, line_no, "model_id");
  out.last_status = row.contains("last_status") && row["last_status"].is_number_integer()
                        ? row["last_status"].get<int>()
                        : 0;
  out.error = optional_string(row, line_no, "error").value_or("");
  out.completed_at = optional_string(row, line_no, "completed_at").value_or("");
}

std::vector<std::string> validate_record(const RawExchange& r) {
  std::vector<std::string> v;
  if (r.item_id.empty()) v.emplace_back("item_id empty");
  if (r.status == ExchangeStatus::ok && r.response_text.empty()) v.emplace_back("status ok with empty response_text");
  if (r.attempts < 0) v.emplace_back("attempts negative");
  if (!r.request_digest.empty() && !is_sha256_hex(r.request_digest)) {
    v.emplace_back("request_digest not 64 lowercase hex");
  }
  return v;
}

std::vector<DistillItem> make_items(std::span<const ImageMeta> images, bool use_urls) {
  const std::string prompt = build_prompt(Source::laion, std::nullopt);
  std::vector<DistillItem> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    const std::string ref = (!use_urls && img.local_path) ? *img.local_path : img.url;
    out.push_back({img.id, ref, prompt, std::string(kLaionPromptId)});
  }
  return out;
}

std::vector<DistillItem> make_items(std::span<const VflanItem> items) {
  std::vector<DistillItem> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    out.push_back({it.id, it.image_ref, build_prompt(Source::vflan, it.question), std::string(kVflanPromptId)});
  }
  return out;
}

std::string request_digest(std::string_view prompt, std::string_view image_bytes, std::string_view model_id) {
  std::string buf;
  buf.reserve(prompt.size() + image_bytes.size() + model_id.size() + 64);
  for (std::string_view part : {prompt, image_bytes, model_id}) {
    buf += std::to_string(part.size());
    buf.push_back(':');
    buf += part;
  }
  return sha256_hex(buf);
}

namespace {

bool is_url(std::string_view ref) { return ref.starts_with("http://") || ref.starts_with("https://"); }

std::string mime_for(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "image/jpeg";
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions_any(const std::string& text, const std::vector<std::string>& markers) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(markers.begin(), markers.end(),
                     [&](const std::string& m) { return !m.empty() && lower.find(m) != std::string::npos; });
}

}  // namespace

RawExchange distill_one(LvlmClient& client, const DistillItem& item, const DistillOptions& options) {
  RawExchange ex;
  ex.item_id = item.item_id;
  ex.prompt_id = item.prompt_id;
  ex.image_ref = item.image_ref;
  ex.model_id = client.model_id();

  LvlmRequest request;
  request.prompt = item.prompt;
  std::string digest_bytes;
  if (options.send_image_urls && is_url(item.image_ref)) {
    request.image = ImagePayload{ImagePayload::Kind::url, item.image_ref, mime_for(item.image_ref)};
    digest_bytes = item.image_ref;
  } else {
    auto bytes = read_file(item.image_ref);
    if (!bytes) {
      ex.status = ExchangeStatus::failed;
      ex.error = "image unreadable: " + item.image_ref;
      ex.completed_at = utc_timestamp();
      return ex;
    }
    request.image = ImagePayload{ImagePayload::Kind::base64, base64_encode(*bytes), mime_for(item.image_ref)};
    digest_bytes = std::move(*bytes);
  }
  ex.request_digest = request_digest(item.prompt, digest_bytes, ex.model_id);

  const auto started = SteadyClock::instance().now();
  for (int attempt = 1;; ++attempt) {
    const Clock::duration start = options.limiter != nullptr ? options.limiter->acquire() : options.clock->now();
    if (options.on_attempt) options.on_attempt(item, attempt, start);
    LvlmResponse res = client.complete(request);
    ex.attempts = attempt;
    ex.last_status = res.status;
    if (res.status == 200 && !res.content.empty()) {
      ex.status = ExchangeStatus::ok;
      ex.response_text = std::move(res.content);
      ex.error.clear();
      break;
    }
    ex.error = res.error.empty() ? "HTTP " + std::to_string(res.status) : res.error;
    if (res.status != 200 && res.status != 0 && mentions_any(res.error, options.refusal_markers)) {
      ex.status = ExchangeStatus::refused_by_policy;
      break;
    }
    // A 200 with no usable content is treated like a transient server fault.
    const bool retryable = res.status == 200 || options.policy.is_retryable(res.status);
    if (!retryable || attempt >= options.policy.max_attempts) {
      ex.status = ExchangeStatus::failed;
      break;
    }
    options.clock->sleep_for(options.policy.backoff_after(attempt));
  }
  // Wall-clock latency would break byte-identical reruns, so it is not
  // recorded when a fixed SOURCE_DATE_EPOCH is in force.
  ex.latency_ms = source_date_epoch() ? 0
                                      : std::chrono::duration_cast<std::chrono::milliseconds>(
                                            SteadyClock::instance().now() - started)
                                            .count();
  ex.completed_at = utc_timestamp();
  return ex;
}

Json BatchSummary::to_json() const {
  Json j;
  j["total"] = total;
  j["ok"] = ok;
  j["refused"] = refused;
  j["failed"] = failed;
  j["resumed"] = resumed;
  j["requests"] = requests;
  return j;
}

std::unordered_set<std::string> load_resume_ids(const fs::path& path) {
  std::unordered_set<std::string> ids;
  if (!fs::exists(path)) return ids;
  for (const auto& [line_no, row] : read_jsonl(path)) {
    ids.insert(detail::require_string(row, line_no, "item_id"));
  }
  return ids;
}

BatchSummary distill_batch(LvlmClient& client, std::span<const DistillItem> items, const BatchOptions& options,
                           const std::function<void(const RawExchange&)>& sink) {
  if (options.concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
  options.distill.policy.validate();

  BatchSummary summary;
  summary.total = items.size();
  std::vector<const DistillItem*> todo;
  todo.reserve(items.size());
  const auto done = options.resume_from ? load_resume_ids(*options.resume_from) : std::unordered_set<std::string>{};
  for (const auto& item : items) {
    if (done.contains(item.item_id)) {
      ++summary.resumed;
    } else {
      todo.push_back(&item);
    }
  }

  TokenBucket limiter(options.rpm, *options.distill.clock);
  DistillOptions per_item = options.distill;
  per_item.limiter = &limiter;

  ordered_parallel_for(
      todo.size(), options.concurrency, [&](std::size_t i) { return distill_one(client, *todo[i], per_item); },
      [&](std::size_t, RawExchange ex) {
        summary.requests += static_cast<std::size_t>(ex.attempts);
        switch (ex.status) {
          case ExchangeStatus::ok:
            ++summary.ok;
            break;
          case ExchangeStatus::refused_by_policy:
            ++summary.refused;
            break;
          case ExchangeStatus::failed:
            ++summary.failed;
            break;
        }
        sink(ex);
      });
  return summary;
}

}  // namespace capdistill
