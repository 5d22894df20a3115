#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace nri {

// Global worker cap, set once from the CLI --threads flag. 0 = hardware.
void set_max_threads(int n);
int max_threads();

// Runs fn(begin, end) over disjoint chunks of [0, n). Work is partitioned
// by index so results are identical for any thread count; callers must only
// write to disjoint locations keyed by index. Runs inline when a single
// worker suffices.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn,
                  std::int64_t grain = 1);

}  // namespace nri
