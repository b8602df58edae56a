#pragma once

#include <cstddef>
#include <functional>

namespace cortical {

// Worker count: CORTICAL_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) across worker threads. Each index is handled
// by exactly one call; callers write results into per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cortical
