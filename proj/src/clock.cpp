#include "capdistill/clock.hpp"

#include <cstdlib>
#include <thread>

namespace capdistill {

Clock::duration SteadyClock::now() const {
  return std::chrono::duration_cast<duration>(std::chrono::steady_clock::now().time_since_epoch());
}

void SteadyClock::sleep_until(duration deadline) {
  const auto remaining = deadline - now();
  if (remaining > duration::zero()) std::this_thread::sleep_for(remaining);
}

SteadyClock& SteadyClock::instance() {
  static SteadyClock clock;
  return clock;
}

void VirtualClock::sleep_until(duration deadline) {
  std::int64_t current = now_.load();
  {
    std::lock_guard lock(mu_);
    sleeps_.push_back(deadline - duration(current));
  }
  while (current < deadline.count() && !now_.compare_exchange_weak(current, deadline.count())) {
  }
}

std::vector<Clock::duration> VirtualClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

std::string format_rfc3339(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<std::time_t> source_date_epoch() {
  const char* env = std::getenv("SOURCE_DATE_EPOCH");
  if (env == nullptr || *env == '\0') return std::nullopt;
  char* end = nullptr;
  const long long v = std::strtoll(env, &end, 10);
  if (end == env || *end != '\0' || v < 0) return std::nullopt;
  return static_cast<std::time_t>(v);
}

std::string utc_timestamp() {
  if (auto fixed = source_date_epoch()) return format_rfc3339(*fixed);
  return format_rfc3339(std::time(nullptr));
}

}  // namespace capdistill
