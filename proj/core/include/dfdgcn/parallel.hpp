#pragma once

#include <cstddef>
#include <functional>

namespace dfdgcn {

/// Worker count: DFDGCN_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t default_threads();

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = default).
/// Work is claimed dynamically, so fn must only write to per-index state.
/// The first exception thrown by fn is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)> &fn);

} // namespace dfdgcn
