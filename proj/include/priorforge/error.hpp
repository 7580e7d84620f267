// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace priorforge {

/// Malformed or inconsistent input data (files, meshes, grids, catalogs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition on a parameter value.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace priorforge
