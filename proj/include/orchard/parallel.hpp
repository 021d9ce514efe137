#pragma once

#include <cstddef>
#include <functional>

namespace orchard {

// Worker count: ORCHARD_THREADS if set (>= 1), otherwise hardware concurrency.
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers
// must write only to per-index state so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace orchard
