#pragma once

#include <string>
#include <string_view>

namespace capdistill {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Standard base64 (RFC 4648) with padding, no line breaks.
std::string base64_encode(std::string_view data);

/// True when `s` is exactly 64 lowercase hex characters.
bool is_sha256_hex(std::string_view s);

}  // namespace capdistill
