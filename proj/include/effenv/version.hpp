#pragma once

namespace effenv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace effenv
