#include <cmath>
#include <vector>

#include "doctest.h"
#include "wz/schemes.hpp"

using namespace wz;

namespace {

const auto kZeroNoise = [](std::uint32_t) { return GaussianPair{0.0, 0.0}; };

std::vector<double> brownian_increments(double dt, long n, std::uint64_t seed,
                                        std::uint64_t sample) {
    const CounterRng rng{seed};
    std::vector<double> out(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            std::sqrt(dt) * rng.normal_pair(sample, static_cast<std::uint32_t>(i)).z0;
    return out;
}

} // namespace

TEST_CASE("quiescent multiscale step is the identity") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const SchemeState s0{wrap({1.234}, cosine.geom), 0.0, 0};
    const SchemeState s1 = multiscale_step(s0, heun, OUParams{0.5, 0.0}, 0.125, 0.0);
    CHECK(s1.m == 0.0);
    CHECK(s1.x.coords[0] == s0.x.coords[0]);
    CHECK(s1.step_index == 1);
    CHECK(limiting_step(s0.x, heun, 0.0).coords[0] == s0.x.coords[0]);
}

TEST_CASE("hand-worked single multiscale step") {
    // eps = 1, dt = 1, m0 = 0, dbeta = 1: m' = (0 + 1)/(1 + 1) = 1/2 and the
    // x-update is the integrator at effective time dt m'/eps = 1/2
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const TorusPoint x0 = wrap({0.0}, cosine.geom);
    const SchemeState s1 =
        multiscale_step(SchemeState{x0, 0.0, 0}, heun, OUParams{1.0, 0.0}, 1.0, 1.0);
    CHECK(s1.m == 0.5);
    CHECK(s1.x.coords[0] == heun.step(0.5, x0).coords[0]);
    // 0.25 (cos 0 + cos 0.5), directly
    CHECK(s1.x.coords[0] == doctest::Approx(0.25 * (1.0 + std::cos(0.5))).epsilon(1e-15));
}

TEST_CASE("constant field: the multiscale trajectory is the wrapped drift sum") {
    const VectorField constant = builtin_field("constant");
    const OUParams params{0.3, 0.8};
    const double dt = 0.125;
    const long n = 24;
    const auto dbeta = brownian_increments(dt, n, 5, 0);
    const OUStepCoeffs c = OUStepCoeffs::make(params, dt);
    for (const auto& kind : available_integrator_kinds(constant)) {
        const Integrator intg = make_integrator(kind, constant);
        TrajectoryConfig cfg{intg, params, dt, n, SchemeMode::multiscale,
                             wrap({0.25}, constant.geom), false};
        const TrajectoryResult res = run_trajectory(cfg, dbeta);
        double m = params.m0, drift = 0.0;
        for (long i = 0; i < n; ++i) {
            m = implicit_euler_update(m, dbeta[static_cast<std::size_t>(i)], c);
            drift += effective_step_time(m, c);
        }
        CAPTURE(kind);
        CHECK(res.final_m == m);  // single m-chain definition, bitwise
        CHECK(res.final_x.coords[0] ==
              doctest::Approx(wrap_coord(0.25 + drift, constant.geom.period)).epsilon(1e-12));
    }
}

TEST_CASE("limiting scheme with the exact flow telescopes to phi(beta(T))") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator exact = make_integrator("exact", cosine);
    const double dt = 0x1p-8;
    const long n = 256;
    const auto dbeta = brownian_increments(dt, n, 7, 3);
    TrajectoryConfig cfg{exact, OUParams{1.0, 0.0}, dt, n, SchemeMode::limiting,
                         wrap({0.0}, cosine.geom), false};
    const TrajectoryResult res = run_trajectory(cfg, dbeta);
    double beta = 0.0;
    for (double db : dbeta) beta += db;
    CHECK(dist(res.final_x, flow_exact(cosine, beta, cfg.x0)) < 1e-10);
}

TEST_CASE("limiting euler is Euler-Maruyama and misses the Stratonovich limit") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator euler = make_integrator("euler", cosine);
    const double dt = 0x1p-10;
    const long n = 1024;
    const TorusPoint x0 = wrap({0.0}, cosine.geom);

    // pathwise: the limiting euler step is exactly X + dbeta cos(X)
    const auto dbeta = brownian_increments(dt, n, 11, 0);
    TorusPoint x = x0;
    for (double db : dbeta) x = limiting_step(x, euler, db);
    double y = 0.0;
    for (double db : dbeta) y = wrap_coord(y + db * std::cos(y), cosine.geom.period);
    CHECK(x.coords[0] == y);

    // in the mean square, the Ito limit stays away from the Stratonovich one
    const long m = 200;
    double acc = 0.0;
    for (long s = 0; s < m; ++s) {
        const auto incr = brownian_increments(dt, n, 11, static_cast<std::uint64_t>(s));
        TorusPoint xe = x0;
        double beta = 0.0;
        for (double db : incr) {
            xe = limiting_step(xe, euler, db);
            beta += db;
        }
        const double gap = dist(xe, flow_exact(cosine, beta, x0));
        acc += gap * gap;
    }
    CHECK(std::sqrt(acc / static_cast<double>(m)) > 0.05);
}

TEST_CASE("multiscale m-chain is bit-identical to the ou chain") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const OUParams params{0.05, 1.0};
    const double dt = 0x1p-7;
    const int n = 128;
    const CounterRng rng{21};
    const OUPaths paths = sample_paths(params, dt, n, rng, 9);
    TrajectoryConfig cfg{heun, params, dt, n, SchemeMode::multiscale,
                         wrap({0.0}, cosine.geom), true};
    const TrajectoryResult res = run_trajectory(cfg, paths.dbeta);
    CHECK(res.final_m == paths.m_disc[static_cast<std::size_t>(n)]);
    REQUIRE(res.path.has_value());
    for (int i = 0; i <= n; ++i)
        CHECK((*res.path)[static_cast<std::size_t>(i)].m ==
              paths.m_disc[static_cast<std::size_t>(i)]);

    // iterating the public per-step op reproduces the batch run bitwise
    SchemeState state{cfg.x0, params.m0, 0};
    for (int i = 0; i < n; ++i)
        state = multiscale_step(state, heun, params, dt, paths.dbeta[static_cast<std::size_t>(i)]);
    CHECK(state.m == res.final_m);
    CHECK(state.x.coords[0] == res.final_x.coords[0]);
}

TEST_CASE("exact_solution evaluates phi(zeta_n, x0)") {
    const OUParams params{0.2, 1.0};
    const double dt = 0x1p-5;
    const int n = 32;
    const CounterRng rng{23};

    const VectorField constant = builtin_field("constant");
    const OUPaths paths = sample_paths(params, dt, n, rng, 2);
    const TorusPoint x0c = wrap({0.5}, constant.geom);
    CHECK(exact_solution(params, paths, constant, x0c, 0).coords[0] == x0c.coords[0]);
    for (int k : {1, 7, n}) {
        const TorusPoint xk = exact_solution(params, paths, constant, x0c, k);
        CHECK(xk.coords[0] ==
              doctest::Approx(wrap_coord(0.5 + paths.zeta[static_cast<std::size_t>(k)],
                                         constant.geom.period))
                  .epsilon(1e-14));
    }

    // cosine field, zero-noise stream, m0 = 1: X(t) = gd(eps (1 - e^{-t/eps^2}))
    const VectorField cosine = builtin_field("cosine");
    const OUPaths quiet = sample_paths_with(params, dt, n, kZeroNoise);
    const TorusPoint x0 = wrap({0.0}, cosine.geom);
    for (int k : {1, 8, n}) {
        const double t = k * dt;
        const double zeta = params.epsilon * (1.0 - std::exp(-t / (params.epsilon * params.epsilon)));
        const double expected = 2.0 * std::atan(std::tanh(0.5 * zeta));
        CHECK(exact_solution(params, quiet, cosine, x0, k).coords[0] ==
              doctest::Approx(expected).epsilon(1e-12));
    }

    const VectorField shear = builtin_field("sine-shear");
    CHECK_THROWS_AS(
        (void)exact_solution(params, paths, shear, wrap({0.0, 0.0}, shear.geom), 1),
        capability_error);
    CHECK_THROWS_AS((void)exact_solution(params, paths, constant, x0c, n + 1),
                    std::domain_error);
}

TEST_CASE("run_trajectory edge cases") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const TorusPoint x0 = wrap({0.7}, cosine.geom);

    TrajectoryConfig empty{heun, OUParams{0.1, 0.4}, 0.25, 0, SchemeMode::multiscale, x0, false};
    const TrajectoryResult res = run_trajectory(empty, {});
    CHECK(res.final_x.coords[0] == x0.coords[0]);
    CHECK(res.final_m == 0.4);

    TrajectoryConfig bad{heun, OUParams{0.1, 0.0}, 0.25, 4, SchemeMode::multiscale, x0, false};
    const std::vector<double> three(3, 0.0);
    CHECK_THROWS_AS((void)run_trajectory(bad, three), std::domain_error);
}

TEST_CASE("huge eps freezes the slow component") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const double dt = 0x1p-6;
    const long n = 64;
    const auto dbeta = brownian_increments(dt, n, 31, 0);
    TrajectoryConfig cfg{heun, OUParams{1e6, 0.0}, dt, n, SchemeMode::multiscale,
                         wrap({0.3}, cosine.geom), false};
    const TrajectoryResult res = run_trajectory(cfg, dbeta);
    CHECK(dist(res.final_x, cfg.x0) < 1e-8);
}

TEST_CASE("multiscale trajectories approach the limiting one as eps -> 0") {
    const VectorField cosine = builtin_field("cosine");
    const Integrator heun = make_integrator("heun", cosine);
    const double dt = 0x1p-8;
    const long n = 256;
    const TorusPoint x0 = wrap({0.0}, cosine.geom);
    const long m = 64;

    double prev = 1e300;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const OUParams params{eps, 0.0};
        const OUStepCoeffs c = OUStepCoeffs::make(params, dt);
        const CounterRng rng{37};
        double acc = 0.0;
        for (long s = 0; s < m; ++s) {
            // shared Brownian increments; the multiscale run consumes the same z-draws
            TorusPoint xm = x0, xl = x0;
            double mchain = params.m0;
            for (long i = 0; i < n; ++i) {
                const GaussianPair z =
                    rng.normal_pair(static_cast<std::uint64_t>(s), static_cast<std::uint32_t>(i));
                const double db = c.l11 * z.z0;
                mchain = implicit_euler_update(mchain, db, c);
                xm = heun.step(effective_step_time(mchain, c), xm);
                xl = limiting_step(xl, heun, db);
            }
            const double gap = dist(xm, xl);
            acc += gap * gap;
        }
        const double d2 = std::sqrt(acc / static_cast<double>(m));
        CHECK(d2 < prev);
        prev = d2;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("cvSDE proxy: exact evaluators converge at rate eps with a stable constant") {
    const VectorField cosine = builtin_field("cosine");
    const TorusPoint x0 = wrap({0.0}, cosine.geom);
    const long m = 20000;
    auto fitted_c = [&](double eps) {
        const OUParams params{eps, 0.0};
        const CounterRng rng{41};
        double acc = 0.0;
        for (long s = 0; s < m; ++s) {
            // one exact joint step to T = 1 is exact in law at the endpoint
            const OUPaths p = sample_paths(params, 1.0, 1, rng, static_cast<std::uint64_t>(s));
            const double gap = dist(flow_exact(cosine, p.zeta[1], x0),
                                    flow_exact(cosine, p.beta[1], x0));
            acc += gap * gap;
        }
        return std::sqrt(acc / static_cast<double>(m)) / eps;
    };
    std::vector<double> cs;
    for (double eps : {0.2, 0.1, 0.05, 0.025}) cs.push_back(fitted_c(eps));
    double lo = 1e300, hi = 0.0;
    for (double c : cs) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    CHECK(hi / lo < 1.5);
    // refining the grid keeps the constant stable
    const double refined = fitted_c(0.0125);
    CHECK(refined < 1.5 * hi);
    CHECK(refined > lo / 1.5);
}
