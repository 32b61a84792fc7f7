#pragma once

namespace ddsim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ddsim
