#pragma once

namespace dcqa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dcqa
