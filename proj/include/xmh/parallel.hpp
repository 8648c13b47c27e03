#pragma once

#include <cstddef>
#include <functional>

namespace xmh {

/// Worker count: XMH_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) over contiguous chunks. Every index is handled
/// exactly once, so results written per index do not depend on the thread
/// count. The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace xmh
