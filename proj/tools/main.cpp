//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>

#include "cli.h"

int main(int argc, char **argv) {
  return tagmol::cli::run(std::vector<std::string>(argv + 1, argv + argc),
                          std::cout, std::cerr);
}
