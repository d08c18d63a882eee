#pragma once

#include <cstddef>
#include <functional>

namespace scaleflow {

/// Number of worker threads to use: min(hardware_concurrency, SCALEFLOW_THREADS).
int thread_count();

/// Runs fn(begin..end) split into contiguous index blocks across worker
/// threads. Block boundaries depend only on (begin, end), not on the thread
/// count, so per-index results are identical regardless of parallelism.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace scaleflow
