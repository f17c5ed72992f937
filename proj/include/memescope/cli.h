// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MEMESCOPE_CLI_H_
#define MEMESCOPE_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace memescope {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitNotFound = 3,
  kExitInternal = 4,
};

// Runs `memescope <command> [flags]`; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memescope

#endif  // MEMESCOPE_CLI_H_
