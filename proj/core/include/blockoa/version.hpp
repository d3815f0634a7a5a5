#pragma once

namespace blockoa {

inline constexpr const char* kToolVersion = "blockoa-0.1.0";

}  // namespace blockoa
