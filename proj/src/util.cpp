#include "estbad/util.hpp"

#include <algorithm>
#include <thread>

namespace estbad {

namespace {
int g_worker_threads = 1;
}

int worker_threads() { return g_worker_threads; }

void set_worker_threads(int n) { g_worker_threads = std::max(1, n); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  parallel_for_cap(count, g_worker_threads, fn);
}

void parallel_for_cap(std::size_t count, int cap,
                      const std::function<void(std::size_t)>& fn) {
  if (cap <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cap), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace estbad
