#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "wz/fields.hpp"
#include "wz/integrators.hpp"
#include "wz/ou.hpp"
#include "wz/torus.hpp"

namespace wz {

enum class SchemeMode {
    multiscale,  ///< X' = Phi(dt m'/eps, X) with the implicit-Euler OU chain
    limiting,    ///< X' = Phi(dbeta, X), the eps -> 0 scheme
};

struct SchemeState {
    TorusPoint x;
    double m = 0.0;
    long step_index = 0;
};

/// Effective integration time dt * m_{n+1} / eps of one multiscale step.
/// Shared so every code path produces bit-identical trajectories.
[[nodiscard]] inline double effective_step_time(double m_next, const OUStepCoeffs& c) {
    return (c.dt * m_next) * c.inv_eps;
}

/// One step of the multiscale scheme. The m-update runs first: the x-update
/// uses m_{n+1}, not m_n.
[[nodiscard]] inline SchemeState multiscale_step(const SchemeState& state,
                                                 const Integrator& intg,
                                                 const OUParams& params, double dt,
                                                 double dbeta) {
    const OUStepCoeffs c = OUStepCoeffs::make(params, dt);
    SchemeState next;
    next.m = implicit_euler_update(state.m, dbeta, c);
    next.x = intg.step(effective_step_time(next.m, c), state.x);
    next.step_index = state.step_index + 1;
    return next;
}

/// One step of the limiting scheme X' = Phi(dbeta, X).
[[nodiscard]] inline TorusPoint limiting_step(const TorusPoint& x, const Integrator& intg,
                                              double dbeta) {
    return intg.step(dbeta, x);
}

/// X(t_n) = phi(zeta_n, x0): exact-in-law sample of the slow component at a
/// grid node, coupled to the increments that drove `paths`.
[[nodiscard]] inline TorusPoint exact_solution(const OUParams& params, const OUPaths& paths,
                                               const VectorField& field, const TorusPoint& x0,
                                               long n) {
    if (params.epsilon != paths.params.epsilon || params.m0 != paths.params.m0)
        throw std::domain_error("exact_solution: params do not match the sampled paths");
    if (!field.has_exact_flow())
        throw capability_error("exact_solution: field has no exact flow");
    if (n < 0 || n > paths.n_steps)
        throw std::domain_error("exact_solution: node index out of range");
    if (!(x0.geom == field.geom))
        throw std::domain_error("exact_solution: geometry mismatch");
    std::array<double, kMaxFieldDim> out{};
    std::span<double> os(out.data(), x0.coords.size());
    field.exact_flow(paths.zeta[static_cast<std::size_t>(n)], x0.coords, os);
    return wrap(std::span<const double>(os.data(), os.size()), field.geom);
}

struct TrajectoryConfig {
    Integrator integrator;
    OUParams params;
    double dt = 0.0;
    long n_steps = 0;
    SchemeMode mode = SchemeMode::multiscale;
    TorusPoint x0;
    bool record_path = false;
};

struct TrajectoryResult {
    TorusPoint final_x;
    double final_m = 0.0;
    std::optional<std::vector<SchemeState>> path;  ///< filled when record_path
};

/// Folds the configured step over the given increments. Limiting mode ignores
/// the OU parameters. The multiscale m-chain is the implicit-Euler chain of
/// the ou module, bit for bit.
[[nodiscard]] inline TrajectoryResult run_trajectory(const TrajectoryConfig& config,
                                                     std::span<const double> increments) {
    if (static_cast<long>(increments.size()) != config.n_steps)
        throw std::domain_error("run_trajectory: increment count != n_steps");
    const VectorField& field = config.integrator.field;
    if (!(config.x0.geom == field.geom))
        throw std::domain_error("run_trajectory: geometry mismatch");
    const int d = field.dim();
    const double L = field.geom.period;
    const OUStepCoeffs c = OUStepCoeffs::make(config.params, config.dt);

    std::array<double, kMaxFieldDim> x{}, out{};
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = config.x0.coords[i];
    double m = config.params.m0;

    TrajectoryResult result;
    if (config.record_path) {
        result.path.emplace();
        result.path->push_back(SchemeState{config.x0, m, 0});
    }
    std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
    std::span<double> os(out.data(), static_cast<std::size_t>(d));
    for (long n = 0; n < config.n_steps; ++n) {
        double u;
        if (config.mode == SchemeMode::multiscale) {
            m = implicit_euler_update(m, increments[n], c);
            u = effective_step_time(m, c);
        } else {
            u = increments[n];
        }
        config.integrator.step_cover(u, xs, os);
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = wrap_coord(out[i], L);
        if (config.record_path)
            result.path->push_back(SchemeState{wrap(xs, field.geom), m, n + 1});
    }
    result.final_x = wrap(xs, field.geom);
    result.final_m = m;
    return result;
}

} // namespace wz
