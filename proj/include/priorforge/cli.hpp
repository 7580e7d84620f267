// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace priorforge {

/// Entry point of the prior-forge executable. Returns 0 on success, 1 on a
/// usage error and 2 on a data error.
int run_cli(int argc, char** argv);

}  // namespace priorforge
