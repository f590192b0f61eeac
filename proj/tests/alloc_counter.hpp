#pragma once

#include <cstddef>

namespace texa::testing {

/// Heap allocations made by this thread since the last reset.
std::size_t allocations();
void reset_allocations();

}  // namespace texa::testing
