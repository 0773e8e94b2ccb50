#pragma once

namespace cdsbench {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace cdsbench
