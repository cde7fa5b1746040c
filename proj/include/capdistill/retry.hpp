#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <set>

#include "capdistill/clock.hpp"

namespace capdistill {

struct RetryPolicy {
  int max_attempts = 5;
  std::int64_t base_backoff_ms = 1000;
  double backoff_multiplier = 2.0;
  std::int64_t max_backoff_ms = 60'000;
  std::set<int> retryable_statuses{429, 500, 502, 503, 504};

  /// Throws std::invalid_argument when attempts < 1, base < 0 or multiplier < 1.
  void validate() const;

  /// Transport failures (status 0) are always retryable.
  bool is_retryable(int status) const { return status == 0 || retryable_statuses.contains(status); }

  /// Delay before attempt `attempt + 1`, given `attempt` (1-based) just failed.
  /// base * multiplier^(attempt-1), capped; nondecreasing in `attempt`.
  std::chrono::milliseconds backoff_after(int attempt) const;
};

/// Shared request-start limiter: a token bucket of capacity one refilled at
/// `rpm` tokens per minute. Each acquire() reserves the next start slot, so
/// consecutive starts are at least 60/rpm seconds apart and any half-open
/// 60-second window holds at most `rpm` starts. Thread-safe.
class TokenBucket {
 public:
  TokenBucket(int rpm, Clock& clock);

  /// Blocks until a start slot is available; returns the slot time.
  Clock::duration acquire();

  int rpm() const { return rpm_; }

 private:
  int rpm_;
  Clock* clock_;
  Clock::duration interval_;
  std::mutex mu_;
  bool first_ = true;
  Clock::duration next_slot_{0};
};

}  // namespace capdistill
