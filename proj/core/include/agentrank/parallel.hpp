#pragma once

#include <cstddef>
#include <functional>

namespace agentrank {

/**
 * Runs fn(i) for every i in [0, n), using up to `threads` worker threads
 * over fixed contiguous blocks.  Each invocation must confine its writes to
 * its own pre-allocated slot; reductions over the slots afterwards happen in
 * index order, so results do not depend on the thread count.  The first
 * exception thrown by any worker is rethrown on the calling thread.
 */
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace agentrank
