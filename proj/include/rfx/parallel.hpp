#pragma once

#include <cstddef>
#include <functional>

namespace rfx {

/// Worker cap: RFX_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) across up to worker_count() threads.
/// Bodies must write only to slots owned by their index; callers merge
/// results in index order so the outcome never depends on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace rfx
