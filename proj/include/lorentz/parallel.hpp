#pragma once

#include <cstddef>
#include <functional>

namespace lorentz {

/// Worker count: hardware concurrency capped by LORENTZ_EMBED_THREADS when set.
int worker_count();

/// Runs body(k) for k in [0, n). Each index is visited exactly once; callers write
/// only to slot k so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lorentz
