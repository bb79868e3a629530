// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return clipvl::cli::dispatch(argc, argv, std::cout, std::cerr); }
