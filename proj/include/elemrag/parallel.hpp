#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace elemrag {

/// Runs fn(i) for i in [0, count) on at most `bound` threads. The first
/// exception stops further scheduling and is rethrown on the caller.
template <class Fn>
void bounded_for(std::size_t count, std::size_t bound, Fn&& fn) {
  if (count == 0) return;
  const std::size_t workers = std::max<std::size_t>(1, std::min(bound, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (!failed.load()) {
          std::size_t i = next.fetch_add(1);
          if (i >= count) break;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            failed = true;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace elemrag
