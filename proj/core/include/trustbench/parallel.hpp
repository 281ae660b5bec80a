#pragma once

#include <cstddef>
#include <functional>

namespace trustbench {

// Worker count: TRUSTBENCH_THREADS when set (>= 1), otherwise hardware concurrency.
int worker_count();

// Number of workers parallel_for will actually use for n items.
int workers_for(std::size_t n);

// Runs fn(i, worker) for i in [0, n) with worker in [0, workers_for(n)).
// Items are handed out by a shared counter, so callers must write results
// by index to stay schedule-invariant. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, int)>& fn);

} // namespace trustbench
