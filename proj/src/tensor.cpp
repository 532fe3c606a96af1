#include "sgen/tensor.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace sgen {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

int worker_threads() {
  static const int threads = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("SGEN_THREADS")) {
      const int limit = std::atoi(env);
      if (limit >= 1) return std::min(limit, hw);
    }
    return hw;
  }();
  return threads;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int threads = std::min(worker_threads(), count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace sgen
