#include "scaleflow/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace scaleflow {

int thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("SCALEFLOW_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (end <= begin) return;
  const std::size_t total = end - begin;
  const int workers = std::min<std::size_t>(thread_count(), total);
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  // Fixed-size blocks pulled from a shared counter; block extents do not
  // depend on the number of workers.
  const std::size_t block = std::max<std::size_t>(1, total / (4 * workers));
  std::atomic<std::size_t> next{begin};
  auto worker = [&]() {
    for (;;) {
      std::size_t b = next.fetch_add(block);
      if (b >= end) break;
      fn(b, std::min(b + block, end));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int i = 0; i < workers - 1; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace scaleflow
