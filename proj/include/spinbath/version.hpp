#pragma once

namespace spinbath {

inline constexpr const char* kToolkitVersion = "1.0.0";

}  // namespace spinbath
