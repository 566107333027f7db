#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace freewalk {

// Runs fn(b) for b in [0, blocks) on up to `jobs` threads. The block partition is fixed by the
// caller, so results that are combined in block order do not depend on `jobs`.
template <class Fn>
void parallel_for_blocks(std::size_t blocks, int jobs, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(blocks, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = next++; b < blocks; b = next++) fn(b);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace freewalk
