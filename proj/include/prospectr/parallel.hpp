#pragma once

#include <cstdint>

namespace prospectr {

// Global worker count: --threads flag, PROSPECTR_THREADS, or hardware default.
void set_thread_count(int n);
int thread_count();

namespace detail {
int resolve_threads(int64_t n);
}

// Static partition of [0, n). Each index must write only its own outputs;
// under that rule results are bit-identical for any thread count.
template <typename F>
void parallel_for(int64_t n, F&& f) {
    const int nt = detail::resolve_threads(n);
    if (nt <= 1) {
        for (int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace prospectr
