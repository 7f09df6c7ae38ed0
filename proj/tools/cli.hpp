#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace namerec {

/// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the default corpus root for `serve`.
inline constexpr const char* kCorpusEnv = "NAMEREC_CORPUS";

/// Runs one command line; args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace namerec
