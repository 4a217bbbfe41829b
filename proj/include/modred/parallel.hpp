#pragma once

#include <cstddef>
#include <functional>

namespace modred {

/// Worker cap for parallel_for. 0 means "use hardware concurrency".
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; the
/// first exception thrown by any iteration is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace modred
