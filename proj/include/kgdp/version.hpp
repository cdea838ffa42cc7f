#pragma once

namespace kgdp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace kgdp
