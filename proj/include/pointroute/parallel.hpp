#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace pointroute {

// Worker count: hardware concurrency, capped by POINTROUTE_THREADS if set.
std::size_t worker_count();

// Splits [0, count) into `workers` contiguous ranges and runs
// fn(begin, end, worker) on each, rethrowing the first failure.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    if (count > 0) fn(std::size_t{0}, count, std::size_t{0});
    return;
  }
  if (workers > count) workers = count;
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * count / workers;
    const std::size_t end = (w + 1) * count / workers;
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end, w);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace pointroute
