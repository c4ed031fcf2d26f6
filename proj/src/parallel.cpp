#include "dreamblend/parallel.hpp"

#include <atomic>

namespace dreamblend::parallel {

namespace {
std::atomic<std::size_t> g_threads{1};
}

std::size_t thread_count() noexcept { return g_threads.load(std::memory_order_relaxed); }

void set_thread_count(std::size_t n) noexcept {
  g_threads.store(n == 0 ? 1 : n, std::memory_order_relaxed);
}

}  // namespace dreamblend::parallel
