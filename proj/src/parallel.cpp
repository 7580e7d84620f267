// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace priorforge {

namespace {
std::atomic<int> g_limit{0};
#ifdef _OPENMP
const int g_default_threads = omp_get_max_threads();
#endif
}  // namespace

void set_thread_limit(int threads) {
    g_limit = threads < 0 ? 0 : threads;
#ifdef _OPENMP
    omp_set_num_threads(g_limit > 0 ? g_limit.load() : g_default_threads);
#endif
}

int thread_limit() {
#ifdef _OPENMP
    return g_limit > 0 ? g_limit.load() : omp_get_max_threads();
#else
    return 1;
#endif
}

double ordered_sum(const std::vector<double>& partials) {
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

}  // namespace priorforge
