#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dr::par {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// Shard count used by the deterministic reductions below. Fixed (independent
/// of the thread count) so that results are bit-identical for any number of
/// threads: each shard is reduced serially in index order and the shard
/// partials are combined in shard order.
inline constexpr std::size_t kShards = 256;

/// Evaluates f(begin, end) -> Acc on contiguous shards of [0, n) and returns
/// the partials in shard order. Acc must be default-constructible.
template <class Acc, class Fn>
std::vector<Acc> sharded_map(std::size_t n, Fn&& f) {
  const std::size_t shards = n < kShards ? (n == 0 ? 0 : n) : kShards;
  std::vector<Acc> partials(shards);
  if (shards == 0) return partials;
  const std::size_t chunk = (n + shards - 1) / shards;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(shards); ++s) {
    const std::size_t begin = static_cast<std::size_t>(s) * chunk;
    const std::size_t end = begin + chunk < n ? begin + chunk : n;
    partials[static_cast<std::size_t>(s)] = f(begin, end);
  }
  return partials;
}

/// Deterministic parallel sum of per_index(i) over [0, n).
template <class Fn>
double shard_sum(std::size_t n, Fn&& per_index) {
  auto partials = sharded_map<double>(n, [&](std::size_t begin, std::size_t end) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += per_index(i);
    return acc;
  });
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

/// Serial reference for shard_sum kept for testing the parallel path.
template <class Fn>
double serial_sum(std::size_t n, Fn&& per_index) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += per_index(i);
  return total;
}

}  // namespace dr::par
