// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "pthk/cli.hpp"

int main(int argc, char** argv) { return pthk::run_cli(argc, argv, std::cout, std::cerr); }
