#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace collemit {

/// Evaluates fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results in index order. If any call throws, the exception of the lowest
/// failing index is rethrown after all workers stop, so the reported failure
/// does not depend on scheduling. Workers stop claiming new indices after the
/// first failure.
template <class F>
auto parallel_map(std::size_t n, std::size_t threads, F&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};

  auto worker = [&] {
    // Indices are claimed in increasing order, so every index below a failure
    // has been claimed and runs to completion before the pool stops.
    for (std::size_t i = next++; i < n && !failed.load(); i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace collemit
