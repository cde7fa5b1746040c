#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace capdistill {

/// Monotonic time source used by rate limiting and retry backoff.
class Clock {
 public:
  using duration = std::chrono::nanoseconds;

  virtual ~Clock() = default;
  virtual duration now() const = 0;
  virtual void sleep_until(duration deadline) = 0;

  void sleep_for(duration d) { sleep_until(now() + d); }
};

class SteadyClock final : public Clock {
 public:
  duration now() const override;
  void sleep_until(duration deadline) override;

  static SteadyClock& instance();
};

/// Simulated time: sleeping jumps the clock forward instead of blocking, so
/// minutes of rate-limited traffic replay in milliseconds. Thread-safe.
class VirtualClock final : public Clock {
 public:
  duration now() const override { return duration(now_.load()); }
  void sleep_until(duration deadline) override;
  void advance(duration d) { now_.fetch_add(d.count()); }

  /// Requested sleep lengths, in call order.
  std::vector<duration> sleeps() const;

 private:
  std::atomic<std::int64_t> now_{0};
  mutable std::mutex mu_;
  std::vector<duration> sleeps_;
};

std::string format_rfc3339(std::time_t t);

/// Current UTC time as RFC 3339. When SOURCE_DATE_EPOCH is set, that instant
/// is returned instead so reruns produce identical files.
std::string utc_timestamp();

std::optional<std::time_t> source_date_epoch();

}  // namespace capdistill
