#pragma once

namespace absteer {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace absteer
