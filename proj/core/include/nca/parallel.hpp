#pragma once

#include <cstddef>
#include <functional>

namespace nca {

/// Worker cap: NCA_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int worker_count();

/// Runs fn(0..n-1) on up to `threads` workers (<= 0 means worker_count()).
/// The first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = 0);

}  // namespace nca
