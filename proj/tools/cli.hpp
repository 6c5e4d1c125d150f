#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ngcl::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,       // verify claim failed, or an unexpected error
  kUsage = 2,         // bad arguments or config
  kNumeric = 3,       // non-finite loss / parameters
  kArtifact = 4,      // unreadable or mismatched checkpoint / data
};

/// Entry point shared by the binary and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ngcl::cli
