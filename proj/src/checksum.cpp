#include "cdhf/checksum.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cdhf {

std::string checksum_hex(std::string_view data) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(data);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

std::string file_checksum_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return checksum_hex(buf.str());
}

}  // namespace cdhf
