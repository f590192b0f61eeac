#pragma once

namespace texa {
inline constexpr const char* kVersion = "0.1.0";
}
