#pragma once

#include <random>

namespace sdeq::detail {

// 53-bit uniform in [0, 1); fixed so results do not depend on the standard
// library's distribution implementation.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace sdeq::detail
