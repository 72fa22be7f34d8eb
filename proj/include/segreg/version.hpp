#pragma once

#define SEGREG_VERSION_MAJOR 0
#define SEGREG_VERSION_MINOR 1
#define SEGREG_VERSION_PATCH 0

namespace segreg {

inline constexpr const char* version_string() { return "0.1.0"; }

}  // namespace segreg
