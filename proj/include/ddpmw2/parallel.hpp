// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ddpmw2/error.hpp"

namespace ddpmw2 {

/// Worker count: explicit request, else DDPMW2_THREADS, else hardware concurrency.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DDPMW2_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ValidationError(std::string("DDPMW2_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to `threads` workers.
/// Chunks are claimed in increasing order. The first exception (by chunk
/// index among those that threw) is rethrown after all workers join.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, unsigned threads, Fn&& fn) {
  if (n_chunks == 0) return;
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n_chunks));
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> stop_at{n_chunks};
  std::mutex guard;
  std::size_t failed_chunk = n_chunks;
  std::exception_ptr failure;

  auto body = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || c > stop_at.load()) return;
      try {
        fn(c);
      } catch (...) {
        std::lock_guard<std::mutex> lock(guard);
        if (c < failed_chunk) {
          failed_chunk = c;
          failure = std::current_exception();
        }
        std::size_t cur = stop_at.load();
        while (c < cur && !stop_at.compare_exchange_weak(cur, c)) {
        }
      }
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ddpmw2
