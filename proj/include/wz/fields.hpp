#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wz/errors.hpp"
#include "wz/torus.hpp"

namespace wz {

/// Fields and integrators keep per-step scratch on the stack; this caps the
/// supported dimension.
inline constexpr int kMaxFieldDim = 8;

/// Map R^d -> R^d on covering-space coordinates, written into `out`.
using CoverFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Flow-type map (t, x) -> x(t) on covering-space coordinates. Implementations
/// commute with lattice shifts, so iterating them never needs intermediate
/// wrapping.
using CoverFlowFn = std::function<void(double, std::span<const double>, std::span<double>)>;

/// Additive split sigma = sigma1 + sigma2 with closed-form flows of both parts.
struct FieldSplit {
    CoverFn eval1;
    CoverFn eval2;
    CoverFlowFn flow1;
    CoverFlowFn flow2;
};

/// Smooth L-periodic vector field on the torus with Jacobian and, when a
/// closed form is known, the exact flow of dx/dt = sigma(x).
struct VectorField {
    std::string name;
    TorusGeometry geom;
    double sigma_bound = 0.0;     ///< sup |sigma|
    double jacobian_bound = 0.0;  ///< sup ||sigma'||
    CoverFn eval;                 ///< sigma
    CoverFn jacobian;             ///< row-major d x d
    std::optional<FieldSplit> split;
    CoverFlowFn exact_flow;       ///< empty when unavailable

    [[nodiscard]] int dim() const { return geom.dim; }
    [[nodiscard]] bool has_exact_flow() const { return static_cast<bool>(exact_flow); }
    [[nodiscard]] bool has_split() const { return split.has_value(); }
};

namespace detail {

constexpr double kPi = 3.141592653589793238462643383279502884;

/// Gudermannian function gd(u) = 2 atan(tanh(u/2)).
[[nodiscard]] inline double gudermannian(double u) {
    return 2.0 * std::atan(std::tanh(0.5 * u));
}

/// Flow of dx/dt = cos x restricted to the branch |x| < pi/2:
/// x(t) = gd(t + atanh(sin x)). Returns x unchanged when x sits on a fixed
/// point at double precision.
[[nodiscard]] inline double cosine_flow_main_branch(double t, double x) {
    const double s = std::sin(x);
    if (s >= 1.0 || s <= -1.0) return x;
    return gudermannian(t + std::atanh(s));
}

/// Flow of dx/dt = 1 + cos x = 2 cos^2(x/2) on the branch |x| < pi:
/// tan(x/2) moves linearly, so x(t) = 2 atan(t + tan(x/2)).
[[nodiscard]] inline double cos_plus_one_flow_branch(double t, double x) {
    return 2.0 * std::atan(t + std::tan(0.5 * x));
}

/// Reduce a covering coordinate to the window [lo, lo + L) and report the
/// removed lattice shift, so scalar branch formulas extend to cover maps.
struct WindowedCoord {
    double base;
    double shift;
};

[[nodiscard]] inline WindowedCoord to_window(double x, double lo, double period) {
    const double base = wrap_coord(x - lo, period) + lo;
    return WindowedCoord{base, x - base};
}

} // namespace detail

/// Constant field sigma(x) = c with exact linear flow.
[[nodiscard]] inline VectorField constant_field(const TorusGeometry& geom,
                                                std::vector<double> c) {
    validate(geom);
    if (static_cast<int>(c.size()) != geom.dim)
        throw std::domain_error("constant_field: dimension mismatch");
    if (geom.dim > kMaxFieldDim) throw std::domain_error("constant_field: dim too large");
    VectorField f;
    f.name = "constant";
    f.geom = geom;
    double norm2 = 0.0;
    for (double ci : c) norm2 += ci * ci;
    f.sigma_bound = std::sqrt(norm2);
    f.jacobian_bound = 0.0;
    const int d = geom.dim;
    f.eval = [c](std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = c[i];
    };
    f.jacobian = [d](std::span<const double>, std::span<double> out) {
        for (int i = 0; i < d * d; ++i) out[i] = 0.0;
    };
    f.exact_flow = [c](double t, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + t * c[i];
    };
    FieldSplit split;
    split.eval1 = f.eval;
    split.eval2 = [](std::span<const double>, std::span<double> out) {
        for (auto& v : out) v = 0.0;
    };
    split.flow1 = f.exact_flow;
    split.flow2 = [](double, std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i];
    };
    f.split = std::move(split);
    return f;
}

/// sigma(x) = cos x on the 2*pi circle. Carries the exact flow (Gudermannian
/// closed form on the branch through 0, extended to the other branch by the
/// reflection symmetry) and the non-commuting split
/// sigma = (cos x + 1) + (-1), both parts with closed-form flows.
[[nodiscard]] inline VectorField cosine_field(const TorusGeometry& geom) {
    using namespace detail;
    validate(geom);
    if (geom.dim != 1) throw std::domain_error("cosine_field: requires d = 1");
    if (std::fabs(geom.period - 2.0 * kPi) > 1e-12)
        throw std::domain_error("cosine_field: requires period 2*pi");
    VectorField f;
    f.name = "cosine";
    f.geom = geom;
    f.sigma_bound = 1.0;
    f.jacobian_bound = 1.0;
    f.eval = [](std::span<const double> x, std::span<double> out) { out[0] = std::cos(x[0]); };
    f.jacobian = [](std::span<const double> x, std::span<double> out) {
        out[0] = -std::sin(x[0]);
    };
    const double L = geom.period;
    f.exact_flow = [L](double t, std::span<const double> x, std::span<double> out) {
        if (t == 0.0) {  // keep Phi(0, x) = x exact
            out[0] = x[0];
            return;
        }
        const auto w = to_window(x[0], -0.5 * kPi, L);
        // the (pi/2, 3pi/2) branch maps onto the main branch through the
        // field's reflection symmetry x -> pi - x
        const double y = (w.base < 0.5 * kPi)
                             ? cosine_flow_main_branch(t, w.base)
                             : kPi - cosine_flow_main_branch(t, kPi - w.base);
        out[0] = y + w.shift;
    };
    FieldSplit split;
    split.eval1 = [](std::span<const double> x, std::span<double> out) {
        out[0] = std::cos(x[0]) + 1.0;
    };
    split.eval2 = [](std::span<const double>, std::span<double> out) { out[0] = -1.0; };
    split.flow1 = [L](double t, std::span<const double> x, std::span<double> out) {
        if (t == 0.0) {
            out[0] = x[0];
            return;
        }
        const auto w = to_window(x[0], -kPi, L);
        out[0] = cos_plus_one_flow_branch(t, w.base) + w.shift;
    };
    split.flow2 = [](double t, std::span<const double> x, std::span<double> out) {
        out[0] = x[0] - t;
    };
    f.split = std::move(split);
    return f;
}

/// sigma(x, y) = (sin y, cos x) on the 2-torus; no closed-form flow.
[[nodiscard]] inline VectorField sine_shear_field(const TorusGeometry& geom) {
    using namespace detail;
    validate(geom);
    if (geom.dim != 2) throw std::domain_error("sine_shear_field: requires d = 2");
    if (std::fabs(geom.period - 2.0 * kPi) > 1e-12)
        throw std::domain_error("sine_shear_field: requires period 2*pi");
    VectorField f;
    f.name = "sine-shear";
    f.geom = geom;
    f.sigma_bound = std::sqrt(2.0);
    f.jacobian_bound = 1.0;
    f.eval = [](std::span<const double> x, std::span<double> out) {
        out[0] = std::sin(x[1]);
        out[1] = std::cos(x[0]);
    };
    f.jacobian = [](std::span<const double> x, std::span<double> out) {
        out[0] = 0.0;
        out[1] = std::cos(x[1]);
        out[2] = -std::sin(x[0]);
        out[3] = 0.0;
    };
    return f;
}

/// Natural geometry for a catalog key.
[[nodiscard]] inline TorusGeometry default_geometry(const std::string& key) {
    if (key == "cosine") return TorusGeometry{1, 2.0 * detail::kPi};
    if (key == "constant") return TorusGeometry{1, 2.0 * detail::kPi};
    if (key == "sine-shear") return TorusGeometry{2, 2.0 * detail::kPi};
    throw lookup_error("unknown field key: " + key);
}

/// Catalog lookup. Keys are stable CLI-facing strings.
[[nodiscard]] inline VectorField builtin_field(const std::string& key,
                                               const TorusGeometry& geom) {
    if (key == "cosine") return cosine_field(geom);
    if (key == "constant") return constant_field(geom, std::vector<double>(geom.dim, 1.0));
    if (key == "sine-shear") return sine_shear_field(geom);
    throw lookup_error("unknown field key: " + key);
}

[[nodiscard]] inline VectorField builtin_field(const std::string& key) {
    return builtin_field(key, default_geometry(key));
}

/// phi(t, x) through the field's exact flow.
[[nodiscard]] inline TorusPoint flow_exact(const VectorField& field, double t,
                                           const TorusPoint& x) {
    if (!field.has_exact_flow())
        throw capability_error("flow_exact: field '" + field.name + "' has no exact flow");
    if (!(x.geom == field.geom)) throw std::domain_error("flow_exact: geometry mismatch");
    std::array<double, kMaxFieldDim> out{};
    field.exact_flow(t, x.coords, std::span<double>(out.data(), x.coords.size()));
    return wrap(std::span<const double>(out.data(), x.coords.size()), field.geom);
}

/// Reference flow by substepping a one-step base map until a Cauchy criterion
/// is met; works for either sign of t.
struct FlowRef {
    VectorField field;
    int substeps_per_unit_time = 256;
    CoverFlowFn base_step;  ///< one step of the base integrator
};

/// FlowRef whose base step is the explicit midpoint rule on field.eval.
[[nodiscard]] inline FlowRef make_flow_ref(const VectorField& field,
                                           int substeps_per_unit_time = 256) {
    FlowRef ref;
    ref.field = field;
    ref.substeps_per_unit_time = substeps_per_unit_time;
    const CoverFn sigma = field.eval;
    const int d = field.dim();
    ref.base_step = [sigma, d](double h, std::span<const double> x, std::span<double> out) {
        std::array<double, kMaxFieldDim> k{}, mid{};
        std::span<double> ks(k.data(), static_cast<std::size_t>(d));
        std::span<double> ms(mid.data(), static_cast<std::size_t>(d));
        sigma(x, ks);
        for (int i = 0; i < d; ++i) mid[i] = x[i] + 0.5 * h * k[i];
        sigma(std::span<const double>(ms.data(), ms.size()), ks);
        for (int i = 0; i < d; ++i) out[i] = x[i] + h * k[i];
    };
    return ref;
}

[[nodiscard]] inline std::vector<double> flow_reference_cover(const FlowRef& ref, double t,
                                                              std::span<const double> x,
                                                              double tol) {
    if (!(tol > 0.0)) throw std::domain_error("flow_reference: tol must be positive");
    const int d = ref.field.dim();
    if (static_cast<int>(x.size()) != d)
        throw std::domain_error("flow_reference: dimension mismatch");

    auto run = [&](long n) {
        std::vector<double> cur(x.begin(), x.end());
        std::vector<double> next(static_cast<std::size_t>(d));
        const double h = t / static_cast<double>(n);
        for (long i = 0; i < n; ++i) {
            ref.base_step(h, cur, next);
            cur.swap(next);
        }
        return cur;
    };

    long n = std::max<long>(1, static_cast<long>(std::ceil(
                                   std::fabs(t) * ref.substeps_per_unit_time)));
    std::vector<double> prev = run(n);
    for (int iter = 0; iter < 18; ++iter) {
        n *= 2;
        std::vector<double> cur = run(n);
        double diff = 0.0;
        for (int i = 0; i < d; ++i) diff = std::max(diff, std::fabs(cur[i] - prev[i]));
        if (diff < tol) return cur;
        prev = std::move(cur);
    }
    throw accuracy_error("flow_reference: no convergence below tol");
}

[[nodiscard]] inline TorusPoint flow_reference(const FlowRef& ref, double t,
                                               const TorusPoint& x, double tol) {
    if (!(x.geom == ref.field.geom))
        throw std::domain_error("flow_reference: geometry mismatch");
    const auto out = flow_reference_cover(ref, t, x.coords, tol);
    return wrap(out, ref.field.geom);
}

} // namespace wz
