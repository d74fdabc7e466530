#ifndef HOMOG_PARALLEL_HPP
#define HOMOG_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace homog {

/// Runs body(i) for i in [0, count) on up to `workers` threads. Work items
/// must write only to their own output slots; the first thrown exception is
/// rethrown on the caller thread after all workers join.
inline void parallel_for(long count, int workers, const std::function<void(long)>& body) {
  if (count <= 0) return;
  if (workers < 1) workers = 1;
  if (workers == 1 || count == 1) {
    for (long i = 0; i < count; ++i) body(i);
    return;
  }
  const int nthreads = static_cast<int>(std::min<long>(workers, count));
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);  // drain remaining work
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace homog

#endif
