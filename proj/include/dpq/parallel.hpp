#pragma once

#include <cstddef>
#include <functional>

namespace dpq {

// Worker cap for row-parallel loops; 0 means hardware concurrency.
void set_max_threads(std::size_t n) noexcept;
std::size_t max_threads() noexcept;

// Calls fn(begin, end) over contiguous blocks of [0, n). Blocks are disjoint
// and each writes only its own rows, so results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_block = 64);

}  // namespace dpq
