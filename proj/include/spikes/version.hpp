#pragma once

namespace spikes {

inline constexpr const char* kVersion = "0.1.0";

} // namespace spikes
