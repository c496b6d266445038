#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace vsp {

// Little-endian primitives shared by the tensor and checkpoint formats.
// Explicit byte order keeps the files portable regardless of host.

inline void put_u32_le(std::ostream& os, std::uint32_t x) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void put_u64_le(std::ostream& os, std::uint64_t x) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void put_f64_le(std::ostream& os, double x) {
    put_u64_le(os, std::bit_cast<std::uint64_t>(x));
}

inline std::uint32_t get_u32_le(std::istream& is, const std::string& err) {
    char b[4];
    is.read(b, 4);
    if (is.gcount() != 4) throw std::runtime_error(err);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return x;
}

inline std::uint64_t get_u64_le(std::istream& is, const std::string& err) {
    char b[8];
    is.read(b, 8);
    if (is.gcount() != 8) throw std::runtime_error(err);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return x;
}

inline double get_f64_le(std::istream& is, const std::string& err) {
    return std::bit_cast<double>(get_u64_le(is, err));
}

}  // namespace vsp
