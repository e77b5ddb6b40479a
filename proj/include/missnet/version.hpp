#pragma once

namespace missnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace missnet
