#pragma once

#include <string>
#include <vector>

namespace uscore::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace uscore::cli
