#pragma once

#include <cstddef>
#include <functional>

namespace implisat {

/// Worker-thread cap for the row-parallel kernels. 0 selects
/// std::thread::hardware_concurrency().
void set_max_threads(unsigned count);
unsigned max_threads();

/// Reads IMPLISAT_THREADS (unset or unparsable leaves the cap unchanged).
void configure_threads_from_env();

/// Splits [0, count) into contiguous ranges and calls body(begin, end) for
/// each, possibly on worker threads. Callers write disjoint outputs per range,
/// so results never depend on the thread count. `work` estimates total cost
/// in multiply-adds; small jobs stay on the calling thread.
void parallel_for(std::size_t count, std::size_t work,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace implisat
