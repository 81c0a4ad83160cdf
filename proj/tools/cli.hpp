#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ulstm::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailed = 1;  // runtime error or a failed gate
inline constexpr int kUsage = 2;   // bad arguments, config or shapes

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ulstm::cli
