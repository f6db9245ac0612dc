#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace dsf {

/// Resolves the worker count: explicit flag value if > 0, else the
/// DSF_THREADS environment variable, else 1.
inline int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("DSF_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

/// Runs fn(begin, end) over disjoint contiguous row ranges. Each row is
/// owned by exactly one worker, so results are bitwise independent of the
/// thread count as long as fn is deterministic per row.
inline void parallel_for_rows(Eigen::Index rows, int threads,
                              const std::function<void(Eigen::Index, Eigen::Index)>& fn) {
  if (rows <= 0) return;
  const Eigen::Index nw = std::clamp<Eigen::Index>(threads, 1, rows);
  if (nw == 1) {
    fn(0, rows);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nw));
  const Eigen::Index chunk = (rows + nw - 1) / nw;
  for (Eigen::Index t = 0; t < nw; ++t) {
    const Eigen::Index b = t * chunk;
    const Eigen::Index e = std::min(rows, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace dsf
