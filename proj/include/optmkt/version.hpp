#pragma once

namespace optmkt {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace optmkt
