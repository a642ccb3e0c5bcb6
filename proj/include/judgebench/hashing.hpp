#pragma once

#include <string>
#include <string_view>

namespace judgebench {

/// Lowercase hex SHA-256 digest of the given bytes.
[[nodiscard]] std::string sha256_hex(std::string_view bytes);

} // namespace judgebench
