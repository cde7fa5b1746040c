#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace capdistill {

/// Runs `work(i)` for i in [0, n) on up to `concurrency` threads and hands
/// results to `sink(i, result)` strictly in index order, from whichever
/// worker completes the gap. Item i is not started until every item below
/// i - concurrency has been emitted, so the reorder buffer never holds more
/// than `concurrency` results. The first exception thrown by `work` or
/// `sink` stops dispatch and is rethrown after all workers join.
template <typename Work, typename Sink>
void ordered_parallel_for(std::size_t n, int concurrency, Work&& work, Sink&& sink) {
  if (concurrency < 1) throw std::invalid_argument("concurrency must be >= 1");
  using Result = std::invoke_result_t<Work&, std::size_t>;

  std::mutex mu;
  std::condition_variable window_cv;
  std::mutex emit_mu;
  std::size_t next_dispatch = 0;
  std::size_t next_emit = 0;
  std::map<std::size_t, Result> pending;
  std::exception_ptr failure;
  const auto window = static_cast<std::size_t>(concurrency);

  auto worker = [&] {
    for (;;) {
      std::size_t index;
      {
        std::unique_lock lock(mu);
        window_cv.wait(lock, [&] { return failure || next_dispatch >= n || next_dispatch < next_emit + window; });
        if (failure || next_dispatch >= n) return;
        index = next_dispatch++;
      }
      try {
        Result result = work(index);
        // emit_mu serialises sink calls; mu guards the shared bookkeeping.
        std::lock_guard emit_lock(emit_mu);
        {
          std::lock_guard lock(mu);
          pending.emplace(index, std::move(result));
        }
        for (;;) {
          std::optional<Result> ready;
          std::size_t ready_index = 0;
          {
            std::lock_guard lock(mu);
            auto it = pending.find(next_emit);
            if (it == pending.end() || failure) break;
            ready_index = it->first;
            ready.emplace(std::move(it->second));
            pending.erase(it);
          }
          sink(ready_index, std::move(*ready));
          {
            std::lock_guard lock(mu);
            ++next_emit;
          }
          window_cv.notify_all();
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        window_cv.notify_all();
        return;
      }
    }
  };

  const std::size_t threads = std::min<std::size_t>(window, std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace capdistill
