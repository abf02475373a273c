#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cvp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// The `cvp` command line. `args` excludes the program name. The workspace
/// directory comes from --data-dir, then UBI_DATA_DIR, then ./ubi-data.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace cvp::cli
