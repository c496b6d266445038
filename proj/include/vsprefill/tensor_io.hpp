#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/binio.hpp"
#include "vsprefill/matrix.hpp"

namespace vsp {

// Tensor file: magic "VSTN", u32 version=1, u32 ndim, u64 dims[ndim], payload
// of little-endian f64 in row-major order. Matrices are rank 2, vectors rank 1.

namespace detail {

inline void write_tensor_header(std::ofstream& os, const std::vector<std::uint64_t>& dims) {
    os.write("VSTN", 4);
    put_u32_le(os, 1);
    put_u32_le(os, static_cast<std::uint32_t>(dims.size()));
    for (std::uint64_t d : dims) put_u64_le(os, d);
}

inline std::vector<std::uint64_t> read_tensor_header(std::ifstream& is, const std::string& path) {
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4) throw std::runtime_error("truncated header in " + path);
    if (std::string(magic, 4) != "VSTN") throw std::runtime_error("not a VSTN tensor: " + path);
    const std::uint32_t version = get_u32_le(is, "truncated header in " + path);
    if (version != 1) {
        throw std::runtime_error("unsupported VSTN version " + std::to_string(version) + " in " +
                                 path);
    }
    const std::uint32_t ndim = get_u32_le(is, "truncated header in " + path);
    std::vector<std::uint64_t> dims(ndim);
    for (std::uint64_t& d : dims) d = get_u64_le(is, "truncated header in " + path);
    return dims;
}

inline void read_payload(std::ifstream& is, std::vector<double>& out, const std::string& path) {
    for (double& x : out) x = get_f64_le(is, "truncated payload in " + path);
}

}  // namespace detail

inline void write_tensor(const std::string& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    detail::write_tensor_header(os, {m.rows, m.cols});
    for (double x : m.data) put_f64_le(os, x);
    if (!os) throw std::runtime_error("tensor write failed: " + path);
}

inline void write_tensor(const std::string& path, const std::vector<double>& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    detail::write_tensor_header(os, {v.size()});
    for (double x : v) put_f64_le(os, x);
    if (!os) throw std::runtime_error("tensor write failed: " + path);
}

inline Matrix read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open tensor: " + path);
    const std::vector<std::uint64_t> dims = detail::read_tensor_header(is, path);
    if (dims.size() != 2) {
        throw std::runtime_error("tensor rank " + std::to_string(dims.size()) +
                                 " where a rank-2 matrix was expected: " + path);
    }
    Matrix m(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]));
    detail::read_payload(is, m.data, path);
    return m;
}

inline std::vector<double> read_vector(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open tensor: " + path);
    const std::vector<std::uint64_t> dims = detail::read_tensor_header(is, path);
    if (dims.size() != 1) {
        throw std::runtime_error("tensor rank " + std::to_string(dims.size()) +
                                 " where a rank-1 vector was expected: " + path);
    }
    std::vector<double> v(static_cast<std::size_t>(dims[0]));
    detail::read_payload(is, v, path);
    return v;
}

}  // namespace vsp
