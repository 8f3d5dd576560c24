#pragma once

#include <string>
#include <string_view>

namespace mvk {

// SHA-256 hex digest; cache keys need a collision-resistant, restart-stable
// function.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

}  // namespace mvk
