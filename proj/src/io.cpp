#include "vabc/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vabc/errors.hpp"

namespace vabc {

static const char* kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve(((len + 2) / 3) * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t n = std::uint32_t(data[i]) << 16;
        if (i + 1 < len) n |= std::uint32_t(data[i + 1]) << 8;
        if (i + 2 < len) n |= std::uint32_t(data[i + 2]);
        out.push_back(kB64[(n >> 18) & 63]);
        out.push_back(kB64[(n >> 12) & 63]);
        out.push_back(i + 1 < len ? kB64[(n >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kB64[n & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) throw FormatError("base64: length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int a = val(s[i]), b = val(s[i + 1]);
        int c = s[i + 2] == '=' ? 0 : val(s[i + 2]);
        int d = s[i + 3] == '=' ? 0 : val(s[i + 3]);
        if (a < 0 || b < 0 || c < 0 || d < 0) throw FormatError("base64: invalid character");
        std::uint32_t n = (std::uint32_t(a) << 18) | (std::uint32_t(b) << 12) |
                          (std::uint32_t(c) << 6) | std::uint32_t(d);
        out.push_back((n >> 16) & 0xff);
        if (s[i + 2] != '=') out.push_back((n >> 8) & 0xff);
        if (s[i + 3] != '=') out.push_back(n & 0xff);
    }
    return out;
}

std::string floats_to_base64(const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    // in-memory layout is little-endian on every supported target
    return base64_encode(reinterpret_cast<const unsigned char*>(v.data()), v.size() * 4);
}

std::vector<float> base64_to_floats(const std::string& s) {
    std::vector<unsigned char> bytes = base64_decode(s);
    if (bytes.size() % 4 != 0) throw FormatError("checkpoint tensor: byte count not float32");
    std::vector<float> out(bytes.size() / 4);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

std::uint32_t crc32_of_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for checksum: " + path);
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        std::streamsize got = f.gcount();
        if (got > 0) {
            crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                        static_cast<uInt>(got));
        }
    }
    return crc;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << content;
}

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace vabc
