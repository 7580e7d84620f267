// Copyright 2026 The prior-forge Authors
// SPDX-License-Identifier: Apache-2.0
#include "priorforge/cli.hpp"

int main(int argc, char** argv) { return priorforge::run_cli(argc, argv); }
