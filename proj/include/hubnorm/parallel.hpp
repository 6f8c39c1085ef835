#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "hubnorm/types.hpp"

namespace hubnorm {

/// Runs fn(i) for i in [0, n) over `threads` workers with a static block
/// partition. Each index is visited exactly once, so writes into per-index
/// slots give results independent of the thread count.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(n, 1));
  if (workers == 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (Index w = 0; w < workers; ++w) {
    const Index begin = n * w / workers;
    const Index end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (Index i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace hubnorm
