#pragma once

namespace irregular_sde {

inline constexpr const char* kLibraryVersion = "1.0.0";

// First line of every CSV artifact; bump when a column layout changes.
inline constexpr const char* kCsvSchemaPrefix = "# irregular-sde v1";

}  // namespace irregular_sde
