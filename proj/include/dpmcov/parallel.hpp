#pragma once

#include <functional>

namespace dpmcov {

// Process-wide cap on worker threads for Monte Carlo loops. 0 or 1 means
// serial. Per-index work must be independent; reductions happen in index
// order afterwards, so results do not depend on the thread count.
void set_max_threads(int n);
int max_threads();

void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace dpmcov
