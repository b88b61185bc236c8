#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "wz/errors.hpp"

namespace wz {

/// Ordinary least-squares line y = intercept + slope * x.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
    int points = 0;
};

[[nodiscard]] inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw insufficient_data_error("fit_line: need at least 2 points");
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    if (det == 0.0) throw insufficient_data_error("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = (n * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / n;
    f.points = static_cast<int>(x.size());
    double rss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        rss += r * r;
    }
    f.residual_rms = std::sqrt(rss / n);
    return f;
}

/// Two-regressor least squares z = intercept + p1 * x + p2 * y.
struct PlaneFit {
    double p1 = 0.0;
    double p2 = 0.0;
    double intercept = 0.0;
    int points = 0;
};

[[nodiscard]] inline PlaneFit fit_plane(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> z) {
    if (x.size() != y.size() || x.size() != z.size() || x.size() < 3)
        throw insufficient_data_error("fit_plane: need at least 3 points");
    // normal equations for [1, x, y]
    double m[3][3] = {};
    double b[3] = {};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double row[3] = {1.0, x[i], y[i]};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) m[r][c] += row[r] * row[c];
            b[r] += row[r] * z[i];
        }
    }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (std::fabs(det) < 1e-30) throw insufficient_data_error("fit_plane: degenerate design");
    auto solve = [&](int col) {
        double a[3][3];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) a[r][c] = (c == col) ? b[r] : m[r][c];
        const double d = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        return d / det;
    };
    PlaneFit f;
    f.intercept = solve(0);
    f.p1 = solve(1);
    f.p2 = solve(2);
    f.points = static_cast<int>(x.size());
    return f;
}

} // namespace wz
