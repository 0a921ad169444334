#pragma once

#define WARPFLOW_VERSION_MAJOR 1
#define WARPFLOW_VERSION_MINOR 0
#define WARPFLOW_VERSION_PATCH 0

namespace warpflow {

inline const char* version_string() { return "1.0.0"; }

} // namespace warpflow
