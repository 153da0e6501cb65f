#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cdhf {

// FNV-1a 64-bit; used for schema ids, dataset checksums and artifact manifests.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string checksum_hex(std::string_view data);
std::string file_checksum_hex(const std::string& path);

}  // namespace cdhf
