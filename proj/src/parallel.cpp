#include "lamnet/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace lamnet {

namespace {

int resolve_default() {
  if (const char* env = std::getenv("LAMNET_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int& thread_count() {
  static int n = resolve_default();
  return n;
}

}  // namespace

int num_threads() { return thread_count(); }

void set_num_threads(int n) { thread_count() = std::max(1, n); }

void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body) {
  const int64_t count = end - begin;
  if (count <= 0) return;
  const int64_t workers = std::min<int64_t>(num_threads(), count);
  if (workers <= 1 || count < 2048) {
    body(begin, end);
    return;
  }
  const int64_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int64_t w = 1; w < workers; ++w) {
    int64_t lo = begin + w * chunk;
    int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(begin, std::min(end, begin + chunk));
  for (auto& t : pool) t.join();
}

}  // namespace lamnet
