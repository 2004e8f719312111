#ifndef SPILLSC_PARALLEL_HPP
#define SPILLSC_PARALLEL_HPP

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace spillsc {

// Runs fn(i) for i in [0, n) on up to n_threads workers with a static block
// partition. fn must write only to per-index slots; results are then
// independent of the thread count. The first exception thrown by any worker
// is rethrown on the calling thread after all workers join.
template <typename Fn>
void parallel_for(int n, int n_threads, Fn&& fn) {
  if (n <= 0) return;
  if (n_threads < 1) n_threads = 1;
  if (n_threads > n) n_threads = n;
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const int base = n / n_threads;
  const int extra = n % n_threads;
  int begin = 0;
  for (int w = 0; w < n_threads; ++w) {
    const int len = base + (w < extra ? 1 : 0);
    const int end = begin + len;
    workers.emplace_back([&, begin, end] {
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spillsc

#endif
