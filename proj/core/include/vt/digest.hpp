#pragma once

#include <string>
#include <string_view>

namespace vt {

// hex-encoded SHA-256; used for cache keys, content hashes and config hashes
std::string sha256_hex(std::string_view data);

}  // namespace vt
