#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace wz {

/// Finiteness test on the bit pattern. Unlike std::isfinite this cannot be
/// folded away by -ffast-math builds.
[[nodiscard]] inline bool is_finite_value(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    return (bits & 0x7ff0000000000000ull) != 0x7ff0000000000000ull;
}

/// Flat d-torus (R / L*Z)^d with the quotient metric.
struct TorusGeometry {
    int dim = 1;
    double period = 2.0 * std::numbers::pi;

    friend bool operator==(const TorusGeometry&, const TorusGeometry&) = default;
};

inline void validate(const TorusGeometry& geom) {
    if (geom.dim < 1) throw std::domain_error("torus: dim must be >= 1");
    if (!is_finite_value(geom.period) || !(geom.period > 0.0))
        throw std::domain_error("torus: period must be positive and finite");
}

/// Point stored as the canonical representative, every coordinate in [0, L).
struct TorusPoint {
    TorusGeometry geom;
    std::vector<double> coords;

    [[nodiscard]] int dim() const { return geom.dim; }
};

/// Canonical representative of a single coordinate in [0, L).
[[nodiscard]] inline double wrap_coord(double v, double period) {
    double w = v - period * std::floor(v / period);
    // floor division may land exactly on the period for inputs just below a
    // lattice point; fold that case back to 0 so the domain stays half-open.
    if (w >= period) w -= period;
    if (w < 0.0) w = 0.0;
    return w;
}

/// Canonical representative of a covering-space vector.
[[nodiscard]] inline TorusPoint wrap(std::span<const double> v, const TorusGeometry& geom) {
    validate(geom);
    if (static_cast<int>(v.size()) != geom.dim)
        throw std::domain_error("torus: wrap dimension mismatch");
    TorusPoint p{geom, std::vector<double>(v.size())};
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!is_finite_value(v[i])) throw std::domain_error("torus: non-finite coordinate");
        p.coords[i] = wrap_coord(v[i], geom.period);
    }
    return p;
}

[[nodiscard]] inline TorusPoint wrap(std::initializer_list<double> v, const TorusGeometry& geom) {
    return wrap(std::span<const double>(v.begin(), v.size()), geom);
}

[[nodiscard]] inline TorusPoint wrap(const std::vector<double>& v, const TorusGeometry& geom) {
    return wrap(std::span<const double>(v), geom);
}

/// Distance on one circle factor between canonical coordinates.
[[nodiscard]] inline double circle_dist(double a, double b, double period) {
    const double d = std::fabs(a - b);
    return std::min(d, period - d);
}

/// Euclidean distance minimized over lattice shifts,
/// sqrt(sum_i min_k |x1_i - x2_i + k*L|^2).
[[nodiscard]] inline double dist(const TorusPoint& x1, const TorusPoint& x2) {
    if (!(x1.geom == x2.geom)) throw std::domain_error("torus: geometry mismatch");
    double sq = 0.0;
    for (int i = 0; i < x1.geom.dim; ++i) {
        const double di = circle_dist(x1.coords[i], x2.coords[i], x1.geom.period);
        sq += di * di;
    }
    return std::sqrt(sq);
}

/// Representative of x closest to `anchor`; |result_i - anchor_i| <= L/2.
[[nodiscard]] inline std::vector<double> lift_near(const TorusPoint& x,
                                                   std::span<const double> anchor) {
    if (static_cast<int>(anchor.size()) != x.geom.dim)
        throw std::domain_error("torus: lift_near dimension mismatch");
    const double L = x.geom.period;
    std::vector<double> out(anchor.size());
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        const double k = std::round((anchor[i] - x.coords[i]) / L);
        out[i] = x.coords[i] + k * L;
    }
    return out;
}

[[nodiscard]] inline std::vector<double> lift_near(const TorusPoint& x,
                                                   const std::vector<double>& anchor) {
    return lift_near(x, std::span<const double>(anchor));
}

} // namespace wz
