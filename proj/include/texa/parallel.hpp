#pragma once

#include <cstddef>
#include <functional>

namespace texa {

/// Worker count cap: TEXA_THREADS if set, else the hardware concurrency (>= 1).
std::size_t thread_budget();

/// Runs fn(i) for every i in [0, n) on up to thread_budget() threads. Results
/// must be written to per-index slots; the first exception (lowest index) is
/// rethrown after all work finishes.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace texa
