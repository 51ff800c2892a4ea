#pragma once

#include <cstddef>
#include <functional>

namespace hublab {

/// Worker cap: HUBLAB_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, count). Each index is visited exactly once; the
/// caller must only write to state owned by index i, which keeps results
/// independent of the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace hublab
