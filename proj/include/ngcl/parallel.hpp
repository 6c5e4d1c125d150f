#pragma once

#include <cstddef>
#include <functional>

namespace ngcl {

/// Worker cap from NGCL_THREADS; 1 when unset or unparsable.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index
/// writes its own slot, so results do not depend on the thread count. The
/// first exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ngcl
