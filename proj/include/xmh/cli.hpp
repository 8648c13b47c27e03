#pragma once

#include <iosfwd>

namespace xmh {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitNumeric = 2,
  kExitIo = 3,
};

/// Subcommands gen-data, train, encode, retrieve, eval, gradcheck and
/// mask-stats. Errors are reported on err and mapped to an ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xmh
