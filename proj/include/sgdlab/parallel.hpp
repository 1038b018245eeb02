#pragma once

#include <cstddef>
#include <functional>

namespace sgdlab {

// requested = 0 falls back to the SGDLAB_THREADS environment variable, then to
// the hardware concurrency.
int resolve_thread_count(int requested);

// Static partition of [0, n) over the given thread count. The body must be
// safe to run concurrently for distinct indices. Exceptions are rethrown for
// the smallest failing index, so error reporting does not depend on timing.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace sgdlab
