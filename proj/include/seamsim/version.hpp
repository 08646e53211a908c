#pragma once

namespace seamsim {

inline constexpr const char* kVersion = "0.1.0";

} // namespace seamsim
