#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace soilpq {

/// Rows per work unit for every chunked kernel. Partial results are always
/// combined in ascending chunk order, so outputs never depend on the number
/// of worker threads.
inline constexpr std::size_t kDefaultChunkRows = 4096;

namespace detail {
inline std::atomic<unsigned>& thread_limit() {
  static std::atomic<unsigned> limit{0};
  return limit;
}
}  // namespace detail

/// 0 selects std::thread::hardware_concurrency().
inline void set_num_threads(unsigned n) { detail::thread_limit().store(n); }

inline unsigned num_threads() {
  const unsigned n = detail::thread_limit().load();
  if (n != 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::size_t chunk_count(std::size_t items, std::size_t chunk) {
  return items == 0 ? 0 : (items + chunk - 1) / chunk;
}

/// Calls fn(chunk_index, begin, end) once per chunk of [0, items). Chunks are
/// handed out dynamically; fn must only write to chunk-private state.
template <typename Fn>
void parallel_chunks(std::size_t items, std::size_t chunk, Fn&& fn) {
  const std::size_t chunks = chunk_count(items, chunk);
  if (chunks == 0) return;
  const std::size_t workers = std::min<std::size_t>(num_threads(), chunks);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    fn(c, begin, std::min(items, begin + chunk));
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
      try {
        run_chunk(c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace soilpq
