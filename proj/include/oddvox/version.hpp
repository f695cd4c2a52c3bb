#pragma once

namespace oddvox {

inline constexpr const char* kToolVersion = "oddvox 0.1.0";

inline constexpr const char* kCheckpointFormat = "oddvox-ckpt-v1";
inline constexpr const char* kDatasetFormat = "oddvox-ds-v1";

}  // namespace oddvox
