#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace segreg::parallel {

namespace detail {

inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};  // 0 = unset, resolve from env/hardware
  return cap;
}

inline bool& in_worker_flag() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace detail

/// Caps the number of worker threads. 0 restores the default
/// (SEGREG_THREADS env var, else hardware concurrency).
inline void set_max_threads(int t) { detail::thread_cap().store(t < 0 ? 0 : t); }

inline int max_threads() {
  int cap = detail::thread_cap().load();
  if (cap > 0) return cap;
  if (const char* env = std::getenv("SEGREG_THREADS")) {
    int t = std::atoi(env);
    if (t > 0) return t;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, count). Work items must be independent; each item
/// writes only its own output slot, so results do not depend on the number of
/// threads or on scheduling. Nested calls from inside a worker run inline.
template <class F>
void parallel_for(std::size_t count, F&& fn) {
  if (count == 0) return;
  int threads = max_threads();
  if (threads > static_cast<int>(count)) threads = static_cast<int>(count);
  if (threads <= 1 || detail::in_worker_flag()) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    detail::in_worker_flag() = true;
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        break;
      }
    }
    detail::in_worker_flag() = false;
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads) - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace segreg::parallel
