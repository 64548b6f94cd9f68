#pragma once

namespace arraygp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace arraygp
