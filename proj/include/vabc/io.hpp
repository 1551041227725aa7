#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vabc {

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& s);

// Little-endian float32 <-> base64, used by the checkpoint format.
std::string floats_to_base64(const std::vector<float>& v);
std::vector<float> base64_to_floats(const std::string& s);

std::uint32_t crc32_of_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// %.9g formatting shared by all CSV writers.
std::string fmt9(double v);

}  // namespace vabc
