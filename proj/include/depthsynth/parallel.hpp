#pragma once

#include <cstddef>
#include <functional>

namespace depthsynth {

/// Worker cap for parallel loops. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls fn(begin, end) on contiguous chunks of [0, n). Chunking is static so
/// results never depend on scheduling. Exceptions from workers are rethrown.
/// Calls made from inside a worker run inline.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace depthsynth
