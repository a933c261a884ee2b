// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_CLI_HPP_
#define CDSE_CLI_HPP_

#include <string>
#include <vector>

namespace cdse {
namespace cli {

// Exit codes: 0 success, 1 usage/configuration error, 2 data error,
// 3 numerical failure (NaN or a failed check).
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

// Entry point used by the binary and by the in-process tests; `args` are the
// command-line arguments without the program name.
int Run(const std::vector<std::string>& args);

}  // namespace cli
}  // namespace cdse

#endif  // CDSE_CLI_HPP_
