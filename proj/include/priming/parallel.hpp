#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace priming {

/// Runs fn(task_index) for task_index in [0, n_tasks) on up to `workers`
/// threads. Tasks are statically partitioned into contiguous ranges, one per
/// worker, so any output written to per-task slots is independent of the
/// worker count. fn must not throw.
template <typename Fn>
void parallel_for(std::size_t n_tasks, int workers, Fn&& fn) {
  if (n_tasks == 0) return;
  const std::size_t w =
      std::max<std::size_t>(1, std::min<std::size_t>(workers <= 0 ? 1 : workers, n_tasks));
  if (w == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t chunk = (n_tasks + w - 1) / w;
  for (std::size_t t = 0; t < w; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n_tasks, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : threads) th.join();
}

}  // namespace priming
