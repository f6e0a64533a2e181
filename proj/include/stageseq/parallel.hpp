#pragma once

#include <cstddef>
#include <functional>

namespace stageseq {

// Worker count from STAGESEQ_THREADS (default 1, clamped to [1, 256]).
std::size_t configured_threads();

// Runs body(i) for i in [0, n). Work is distributed over up to `threads`
// workers; callers own any result ordering. The first exception thrown by a
// body is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace stageseq
