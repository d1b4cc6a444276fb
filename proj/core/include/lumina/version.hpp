#pragma once

namespace lumina {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lumina
