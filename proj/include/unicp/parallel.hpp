#pragma once

#include <cstddef>
#include <functional>

namespace unicp {

// Worker cap read from UNICP_THREADS (default 1). Values < 1 or unparsable fall back to 1.
std::size_t worker_count();

// Runs fn(i) for i in [0, count). Each index must write only to state it owns;
// with one worker this is a plain loop in index order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace unicp
