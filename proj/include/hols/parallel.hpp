#pragma once

#include <cstddef>
#include <functional>

namespace hols {

/// Worker count: HOLS_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, count). Each index is processed exactly once;
/// callers write results into slot i so output never depends on scheduling.
/// The first exception thrown by any body is rethrown on the calling thread.
/// Calls made from inside a body run sequentially on that worker.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace hols
