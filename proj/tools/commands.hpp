#pragma once

#include <string>
#include <vector>

namespace mah::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kRuntimeError = 2;

// Entry point shared by the executable and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args);

// Hex SHA-256 of a file's bytes.
std::string file_digest(const std::string& path);

}  // namespace mah::cli
