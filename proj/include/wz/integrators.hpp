#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "wz/errors.hpp"
#include "wz/fields.hpp"
#include "wz/fit.hpp"
#include "wz/torus.hpp"

namespace wz {

enum class IntegratorOrder {
    first = 1,   ///< local error O(t^2); the Euler negative control
    second = 2,  ///< local error O(t^3)
    exact = 3,   ///< the flow map itself
};

/// One-step map Phi(t, x) approximating the flow of dx/dt = sigma(x).
/// `step_cover` does all algebra in the covering space; `step` wraps once at
/// the end, and both satisfy Phi(0, x) = x exactly.
struct Integrator {
    std::string name;
    VectorField field;
    IntegratorOrder declared_order = IntegratorOrder::second;
    CoverFlowFn step_cover;

    [[nodiscard]] TorusPoint step(double t, const TorusPoint& x) const {
        std::array<double, kMaxFieldDim> out{};
        std::span<double> os(out.data(), x.coords.size());
        step_cover(t, x.coords, os);
        return wrap(std::span<const double>(os.data(), os.size()), field.geom);
    }
};

[[nodiscard]] inline const std::vector<std::string>& integrator_kinds() {
    static const std::vector<std::string> kinds = {"taylor2", "midpoint", "heun",
                                                   "strang",  "euler",    "exact"};
    return kinds;
}

/// Kinds whose capability requirements the given field satisfies.
[[nodiscard]] inline std::vector<std::string> available_integrator_kinds(
    const VectorField& field) {
    std::vector<std::string> out;
    for (const auto& k : integrator_kinds()) {
        if (k == "strang" && !field.has_split()) continue;
        if (k == "exact" && !field.has_exact_flow()) continue;
        out.push_back(k);
    }
    return out;
}

[[nodiscard]] inline Integrator make_integrator(const std::string& kind,
                                                const VectorField& field) {
    if (field.dim() > kMaxFieldDim)
        throw std::domain_error("make_integrator: field dimension too large");
    Integrator intg;
    intg.name = kind;
    intg.field = field;
    const int d = field.dim();
    const CoverFn sigma = field.eval;
    const CoverFn jac = field.jacobian;

    if (kind == "taylor2") {
        intg.declared_order = IntegratorOrder::second;
        intg.step_cover = [sigma, jac, d](double t, std::span<const double> x,
                                          std::span<double> out) {
            std::array<double, kMaxFieldDim> s{};
            std::array<double, kMaxFieldDim * kMaxFieldDim> j{};
            sigma(x, std::span<double>(s.data(), static_cast<std::size_t>(d)));
            jac(x, std::span<double>(j.data(), static_cast<std::size_t>(d * d)));
            for (int i = 0; i < d; ++i) {
                double js = 0.0;
                for (int k = 0; k < d; ++k) js += j[i * d + k] * s[k];
                out[i] = x[i] + t * s[i] + 0.5 * t * t * js;
            }
        };
    } else if (kind == "midpoint") {
        intg.declared_order = IntegratorOrder::second;
        intg.step_cover = [sigma, d](double t, std::span<const double> x,
                                     std::span<double> out) {
            std::array<double, kMaxFieldDim> s{}, mid{};
            std::span<double> ss(s.data(), static_cast<std::size_t>(d));
            sigma(x, ss);
            for (int i = 0; i < d; ++i) mid[i] = x[i] + 0.5 * t * s[i];
            sigma(std::span<const double>(mid.data(), static_cast<std::size_t>(d)), ss);
            for (int i = 0; i < d; ++i) out[i] = x[i] + t * s[i];
        };
    } else if (kind == "heun") {
        intg.declared_order = IntegratorOrder::second;
        intg.step_cover = [sigma, d](double t, std::span<const double> x,
                                     std::span<double> out) {
            std::array<double, kMaxFieldDim> s1{}, s2{}, pred{};
            std::span<double> s1s(s1.data(), static_cast<std::size_t>(d));
            std::span<double> s2s(s2.data(), static_cast<std::size_t>(d));
            sigma(x, s1s);
            for (int i = 0; i < d; ++i) pred[i] = x[i] + t * s1[i];
            sigma(std::span<const double>(pred.data(), static_cast<std::size_t>(d)), s2s);
            for (int i = 0; i < d; ++i) out[i] = x[i] + 0.5 * t * (s1[i] + s2[i]);
        };
    } else if (kind == "strang") {
        if (!field.has_split())
            throw capability_error("make_integrator: strang requires a field split");
        const FieldSplit split = *field.split;
        intg.declared_order = IntegratorOrder::second;
        intg.step_cover = [split, d](double t, std::span<const double> x,
                                     std::span<double> out) {
            std::array<double, kMaxFieldDim> a{}, b{};
            std::span<double> as(a.data(), static_cast<std::size_t>(d));
            std::span<double> bs(b.data(), static_cast<std::size_t>(d));
            split.flow2(0.5 * t, x, as);
            split.flow1(t, std::span<const double>(as.data(), as.size()), bs);
            split.flow2(0.5 * t, std::span<const double>(bs.data(), bs.size()), out);
        };
    } else if (kind == "euler") {
        intg.declared_order = IntegratorOrder::first;
        intg.step_cover = [sigma, d](double t, std::span<const double> x,
                                     std::span<double> out) {
            std::array<double, kMaxFieldDim> s{};
            sigma(x, std::span<double>(s.data(), static_cast<std::size_t>(d)));
            for (int i = 0; i < d; ++i) out[i] = x[i] + t * s[i];
        };
    } else if (kind == "exact") {
        if (!field.has_exact_flow())
            throw capability_error("make_integrator: exact requires an exact flow");
        intg.declared_order = IntegratorOrder::exact;
        intg.step_cover = field.exact_flow;
    } else {
        throw lookup_error("unknown integrator kind: " + kind);
    }
    return intg;
}

/// deltaPhi(t1, t2, x) = Phi(t1 + t2, x) - Phi(t1, Phi(t2, x)) as the shortest
/// displacement on the torus.
[[nodiscard]] inline std::vector<double> defect(const Integrator& intg, double t1, double t2,
                                                const TorusPoint& x) {
    const TorusPoint direct = intg.step(t1 + t2, x);
    const TorusPoint composed = intg.step(t1, intg.step(t2, x));
    const std::vector<double> lifted = lift_near(composed, direct.coords);
    std::vector<double> delta(lifted.size());
    for (std::size_t i = 0; i < lifted.size(); ++i) delta[i] = direct.coords[i] - lifted[i];
    return delta;
}

/// Residuals of the t = 0 derivative identities of a consistent one-step map:
/// dPhi/dt = sigma, d2Phi/dt2 = sigma' sigma, d2Phi/dtdx = sigma', measured by
/// central finite differences at each sample point.
struct OrderConditionReport {
    std::string integrator;
    double err_dt = 0.0;   ///< max residual of the first-derivative identity
    double err_dtt = 0.0;  ///< max residual of the second-derivative identity
    double err_dtx = 0.0;  ///< max residual of the mixed-derivative identity
    double tol = 1e-4;

    [[nodiscard]] bool pass_dt() const { return err_dt < tol; }
    [[nodiscard]] bool pass_dtt() const { return err_dtt < tol; }
    [[nodiscard]] bool pass_dtx() const { return err_dtx < tol; }
    [[nodiscard]] bool pass_all() const { return pass_dt() && pass_dtt() && pass_dtx(); }
};

[[nodiscard]] inline OrderConditionReport check_order_conditions(
    const Integrator& intg, const std::vector<TorusPoint>& samples, double h = 1e-3,
    double tol = 1e-4) {
    if (!(h > 0.0) || h > 0.1) throw std::domain_error("check_order_conditions: h in (0, 0.1]");
    OrderConditionReport rep;
    rep.integrator = intg.name;
    rep.tol = tol;
    const int d = intg.field.dim();
    const std::size_t ds = static_cast<std::size_t>(d);

    std::array<double, kMaxFieldDim> sig{}, jsig{};
    std::array<double, kMaxFieldDim * kMaxFieldDim> jac{};
    auto phi = [&](double t, std::span<const double> x) {
        std::vector<double> out(ds);
        intg.step_cover(t, x, out);
        return out;
    };

    for (const TorusPoint& p : samples) {
        std::span<const double> x(p.coords);
        intg.field.eval(x, std::span<double>(sig.data(), ds));
        intg.field.jacobian(x, std::span<double>(jac.data(), ds * ds));
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += jac[i * d + k] * sig[k];
            jsig[static_cast<std::size_t>(i)] = acc;
        }

        const auto fp = phi(h, x), fm = phi(-h, x);
        const auto fp2 = phi(2.0 * h, x), fm2 = phi(-2.0 * h, x);
        for (int i = 0; i < d; ++i) {
            const double dt1 = (fp[i] - fm[i]) / (2.0 * h);
            rep.err_dt = std::max(rep.err_dt, std::fabs(dt1 - sig[i]));
            // 5-point stencil for the second t-derivative
            const double dt2 = (-fp2[i] + 16.0 * fp[i] - 30.0 * x[i] + 16.0 * fm[i] - fm2[i]) /
                               (12.0 * h * h);
            rep.err_dtt = std::max(rep.err_dtt, std::fabs(dt2 - jsig[i]));
        }

        std::vector<double> xp(p.coords), xm(p.coords);
        for (int j = 0; j < d; ++j) {
            xp[j] += h;
            xm[j] -= h;
            const auto pp = phi(h, xp), pm = phi(h, xm);
            const auto mp = phi(-h, xp), mm = phi(-h, xm);
            for (int i = 0; i < d; ++i) {
                const double mixed = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
                rep.err_dtx = std::max(rep.err_dtx, std::fabs(mixed - jac[i * d + j]));
            }
            xp[j] = p.coords[j];
            xm[j] = p.coords[j];
        }
    }
    return rep;
}

/// Scaling exponents of |deltaPhi(t1, t2, x)| ~ t1^p1 t2^p2 fitted on a grid.
struct DefectReport {
    std::string integrator;
    double p1 = 0.0;
    double p2 = 0.0;
    double max_defect = 0.0;
    bool below_floor = false;  ///< every grid point under the rounding floor
    bool pass = false;

    [[nodiscard]] double total() const { return p1 + p2; }
};

inline constexpr double kDefectFloor = 1e-13;

[[nodiscard]] inline DefectReport fit_defect_scaling(const Integrator& intg,
                                                     const std::vector<TorusPoint>& x_samples,
                                                     std::span<const double> t_grid) {
    if (t_grid.size() < 6)
        throw std::domain_error("fit_defect_scaling: need >= 6 grid points per axis");
    for (double t : t_grid)
        if (!(t > 0.0) || t > 0.5)
            throw std::domain_error("fit_defect_scaling: grid must lie in (0, 0.5]");

    DefectReport rep;
    rep.integrator = intg.name;
    std::vector<double> lt1, lt2, ld;
    for (double t1 : t_grid) {
        for (double t2 : t_grid) {
            double worst = 0.0;
            for (const TorusPoint& x : x_samples) {
                const auto delta = defect(intg, t1, t2, x);
                double sq = 0.0;
                for (double v : delta) sq += v * v;
                worst = std::max(worst, std::sqrt(sq));
            }
            rep.max_defect = std::max(rep.max_defect, worst);
            if (worst < kDefectFloor) continue;  // log of rounding noise corrupts the fit
            lt1.push_back(std::log(t1));
            lt2.push_back(std::log(t2));
            ld.push_back(std::log(worst));
        }
    }

    if (ld.empty()) {
        rep.below_floor = true;
        rep.pass = intg.declared_order == IntegratorOrder::exact;
        return rep;
    }
    const PlaneFit fit = fit_plane(lt1, lt2, ld);
    rep.p1 = fit.p1;
    rep.p2 = fit.p2;
    switch (intg.declared_order) {
        case IntegratorOrder::first:
            rep.pass = rep.total() >= 1.8 && rep.total() <= 2.2;
            break;
        case IntegratorOrder::second:
            rep.pass = rep.total() >= 2.8 && rep.total() <= 3.3 &&
                       std::min(rep.p1, rep.p2) >= 0.9;
            break;
        case IntegratorOrder::exact:
            rep.pass = false;  // a nonzero defect contradicts the flow property
            break;
    }
    return rep;
}

/// Default geometric grid for defect fits: 0.5 * 2^-k, k = 0..6.
[[nodiscard]] inline std::vector<double> default_defect_grid() {
    std::vector<double> g;
    for (int k = 0; k <= 6; ++k) g.push_back(0.5 * std::ldexp(1.0, -k));
    return g;
}

} // namespace wz
