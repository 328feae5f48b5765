//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_TOOLS_CLI_H_
#define TAGMOL_TOOLS_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace tagmol::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,  // bad flags, config or dataset contents
  kRuntimeError = 2, // divergence abort, I/O
  kCheckpointError = 3,
};

// `args` excludes the program name.
int run(const std::vector<std::string> &args, std::ostream &out,
        std::ostream &err);

} // namespace tagmol::cli

#endif // TAGMOL_TOOLS_CLI_H_
