#pragma once

// Static-partition parallel loop. Callers that need run-to-run determinism
// write to per-index slots and reduce sequentially afterwards, so results do
// not depend on the worker count.

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace sodgan {

inline int default_threads() {
  if (const char* env = std::getenv("SODGAN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

template <class Fn>
void parallel_for(int n, int nthreads, Fn&& fn) {
  if (n <= 0) return;
  if (nthreads <= 0) nthreads = default_threads();
  if (nthreads > n) nthreads = n;
  if (nthreads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nthreads);
  for (int w = 0; w < nthreads; ++w) {
    const int lo = static_cast<int>(static_cast<long long>(n) * w / nthreads);
    const int hi = static_cast<int>(static_cast<long long>(n) * (w + 1) / nthreads);
    workers.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace sodgan
