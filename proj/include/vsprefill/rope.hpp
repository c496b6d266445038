#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vsprefill/matrix.hpp"

namespace vsp {

// Rotary embedding configuration. Plane p pairs dimensions (2p, 2p+1) and
// rotates them by t * theta_p, theta_p = base^(-2p/D).
struct RopeConfig {
    std::size_t head_dim = 0;
    double base = 10000.0;

    RopeConfig() = default;
    RopeConfig(std::size_t dim, double b = 10000.0) : head_dim(dim), base(b) {
        if (head_dim < 2 || head_dim % 2 != 0) {
            throw std::invalid_argument("rope head_dim must be even and >= 2");
        }
        if (!(base > 0.0)) {
            throw std::invalid_argument("rope base must be positive");
        }
    }

    std::size_t planes() const { return head_dim / 2; }

    double theta(std::size_t p) const {
        return std::pow(base, -2.0 * static_cast<double>(p) / static_cast<double>(head_dim));
    }

    std::vector<double> thetas() const {
        std::vector<double> t(planes());
        for (std::size_t p = 0; p < t.size(); ++p) t[p] = theta(p);
        return t;
    }
};

// Rotate one vector by R(t). t may be negative (used for relative offsets).
inline void rope_rotate_inplace(double* v, double t, const RopeConfig& cfg) {
    for (std::size_t p = 0; p < cfg.planes(); ++p) {
        const double angle = t * cfg.theta(p);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double x = v[2 * p];
        const double y = v[2 * p + 1];
        v[2 * p] = c * x - s * y;
        v[2 * p + 1] = s * x + c * y;
    }
}

inline std::vector<double> rope_rotate(const std::vector<double>& v, double t,
                                       const RopeConfig& cfg) {
    require(v.size() == cfg.head_dim, "rope_rotate: vector length != head_dim");
    std::vector<double> out = v;
    rope_rotate_inplace(out.data(), t, cfg);
    return out;
}

// Row t of x is rotated by R(positions[t]).
inline Matrix apply_rope(const Matrix& x, const std::vector<std::size_t>& positions,
                         const RopeConfig& cfg) {
    require(x.cols == cfg.head_dim, "apply_rope: column count != head_dim");
    require(positions.size() == x.rows, "apply_rope: positions length != row count");
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows; ++i) {
        rope_rotate_inplace(out.row_ptr(i), static_cast<double>(positions[i]), cfg);
    }
    return out;
}

// Rows rotated by their own index: position t = row t.
inline Matrix apply_rope(const Matrix& x, const RopeConfig& cfg) {
    std::vector<std::size_t> positions(x.rows);
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    return apply_rope(x, positions, cfg);
}

}  // namespace vsp
