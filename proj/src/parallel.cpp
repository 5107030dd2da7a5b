#include "dpmcov/parallel.hpp"

#include <atomic>
#include <thread>
#include <vector>

namespace dpmcov {
namespace {
std::atomic<int> g_max_threads{0};
}

void set_max_threads(int n) { g_max_threads.store(n < 0 ? 0 : n); }
int max_threads() { return g_max_threads.load(); }

void parallel_for(int n, const std::function<void(int)>& fn) {
  int threads = g_max_threads.load();
  if (threads <= 1 || n < 2 * threads) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<int> next{0};
  const int chunk = 64;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        int begin = next.fetch_add(chunk);
        if (begin >= n) return;
        int end = begin + chunk < n ? begin + chunk : n;
        for (int i = begin; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dpmcov
