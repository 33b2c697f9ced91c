#include "pq/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <vector>

#ifdef PQ_HAVE_OPENMP
#include <omp.h>
#endif

namespace pq::par {

namespace {

bool env_serial() {
  static const bool v = [] {
    const char* s = std::getenv("PQ_FORCE_SERIAL");
    return s != nullptr && s[0] != '\0' && s[0] != '0';
  }();
  return v;
}

std::atomic<bool> g_force_serial{false};

}  // namespace

bool parallel_enabled() {
#ifdef PQ_HAVE_OPENMP
  return !env_serial() && !g_force_serial.load(std::memory_order_relaxed);
#else
  return false;
#endif
}

bool force_serial(bool on) {
  return g_force_serial.exchange(on, std::memory_order_relaxed);
}

int worker_count() {
#ifdef PQ_HAVE_OPENMP
  if (parallel_enabled()) return omp_get_max_threads();
#endif
  return 1;
}

void for_index(int count, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  if (!parallel_enabled()) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
#ifdef PQ_HAVE_OPENMP
  std::exception_ptr first;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
#else
  for (int i = 0; i < count; ++i) fn(i);
#endif
}

double max_index(int count, const std::function<double(int)>& fn) {
  if (count <= 0) return -std::numeric_limits<double>::infinity();
  std::vector<double> table(static_cast<std::size_t>(count));
  for_index(count, [&](int i) { table[static_cast<std::size_t>(i)] = fn(i); });
  double worst = table[0];
  for (int i = 1; i < count; ++i) worst = std::max(worst, table[static_cast<std::size_t>(i)]);
  return worst;
}

}  // namespace pq::par
