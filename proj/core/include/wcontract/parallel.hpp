#pragma once

#include <cstddef>
#include <functional>

namespace wcontract {

//! requested > 0 wins; otherwise TOOL_THREADS; otherwise hardware concurrency.
int resolve_threads(int requested = 0);

//! Process-wide default used when an operation is called with threads = 0.
void set_default_threads(int n);
int default_threads();

//! Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write
//! results into per-index slots and reduce afterwards in index order, so
//! the outcome does not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace wcontract
