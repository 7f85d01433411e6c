#pragma once

#include <cstddef>
#include <functional>

namespace adenet {

/// Worker thread cap: ADENET_THREADS if set and positive, otherwise the
/// hardware concurrency. Deterministic mode forces 1.
std::size_t worker_threads();

void set_deterministic(bool on);
bool deterministic();

/// Runs body(i) for i in [0, n). Each index must write only its own output
/// slot; callers reduce afterwards in index order, so results do not
/// depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace adenet
