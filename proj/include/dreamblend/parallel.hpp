#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dreamblend::parallel {

/// Worker count used by the compute kernels. Defaults to 1.
std::size_t thread_count() noexcept;
void set_thread_count(std::size_t n) noexcept;

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks of
/// independent indices, so the result never depends on the thread count as
/// long as fn(i) only writes state owned by index i. `cost` is a rough
/// per-index operation count used to skip threading for tiny workloads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t cost, Fn&& fn) {
  constexpr std::size_t kMinWorkPerThread = 1 << 15;
  std::size_t workers = std::min(thread_count(), n);
  if (cost > 0) workers = std::min(workers, std::max<std::size_t>(1, n * cost / kMinWorkPerThread));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (std::size_t i = 0; i < std::min(n, block); ++i) fn(i);
}

}  // namespace dreamblend::parallel
