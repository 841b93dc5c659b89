#pragma once

namespace mhx {

inline constexpr const char* kToolkitVersion = "1.0.0";
inline constexpr int kCheckpointFormatVersion = 1;

} // namespace mhx
