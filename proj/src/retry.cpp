#include "capdistill/retry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace capdistill {

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (base_backoff_ms < 0) throw std::invalid_argument("base_backoff_ms must be >= 0");
  if (!(backoff_multiplier >= 1.0)) throw std::invalid_argument("backoff_multiplier must be >= 1");
  if (max_backoff_ms < base_backoff_ms) throw std::invalid_argument("max_backoff_ms must be >= base_backoff_ms");
}

std::chrono::milliseconds RetryPolicy::backoff_after(int attempt) const {
  const double exponent = std::max(0, attempt - 1);
  const double ms = static_cast<double>(base_backoff_ms) * std::pow(backoff_multiplier, exponent);
  const double capped = std::min(ms, static_cast<double>(max_backoff_ms));
  return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

TokenBucket::TokenBucket(int rpm, Clock& clock) : rpm_(rpm), clock_(&clock) {
  if (rpm < 1) throw std::invalid_argument("rpm must be >= 1");
  interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::minutes(1)) / rpm;
  // Round up so rpm * interval >= 60 s exactly.
  if (interval_ * rpm < std::chrono::minutes(1)) interval_ += Clock::duration(1);
}

Clock::duration TokenBucket::acquire() {
  Clock::duration slot;
  {
    std::lock_guard lock(mu_);
    const auto now = clock_->now();
    slot = first_ ? now : std::max(now, next_slot_);
    first_ = false;
    next_slot_ = slot + interval_;
  }
  clock_->sleep_until(slot);
  return slot;
}

}  // namespace capdistill
