#pragma once

namespace moma {

inline constexpr const char* kEngineVersion = "moma 0.1.0";

}  // namespace moma
