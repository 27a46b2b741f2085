#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pmme::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 70;

std::string version();

/// Runs one command; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace pmme::cli
