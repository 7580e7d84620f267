// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace priorforge {

/// Cap on OpenMP workers used by the batch kernels. 0 restores the runtime default.
void set_thread_limit(int threads);
int thread_limit();

/// Fixed partition size for chunked reductions. Partial results are combined in
/// chunk order, so numeric output does not depend on the worker count.
inline constexpr std::size_t kReductionChunk = 2048;

/// Sum of per-chunk partials in chunk order.
double ordered_sum(const std::vector<double>& partials);

}  // namespace priorforge
