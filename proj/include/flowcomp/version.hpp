#pragma once

namespace flowcomp {

inline constexpr const char* kEngineVersion = "flowcomp 0.1.0";

}  // namespace flowcomp
