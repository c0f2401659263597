#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace uscore {

// Runs body(i) for i in [0, n) on up to `workers` threads. Work is split into
// contiguous blocks; callers write results into per-index slots so the output
// does not depend on the worker count. The first exception (by block) is rethrown.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      const std::size_t begin = n * w / workers;
      const std::size_t end = n * (w + 1) / workers;
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace uscore
