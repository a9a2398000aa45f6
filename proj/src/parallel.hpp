#pragma once

#include <cstddef>

namespace llgm {

// Process-wide cap for tile-parallel workers. 0 = hardware concurrency.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Iterations must write disjoint state; any
// cross-iteration reduction has to happen after the call, in index order,
// so results stay independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn);

} // namespace llgm

#ifdef _OPENMP
#include <omp.h>
#endif

namespace llgm {

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
#ifdef _OPENMP
    if (thread_count() != 1 && n > 1) {
        const long long ln = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(thread_count())
        for (long long i = 0; i < ln; ++i) fn(static_cast<std::size_t>(i));
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

} // namespace llgm
