#pragma once

namespace uscore {
inline constexpr const char* kVersion = "0.1.0";
}
