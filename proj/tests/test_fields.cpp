#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "wz/fields.hpp"
#include "wz/rng.hpp"
#include "wz/torus.hpp"

using namespace wz;

namespace {

constexpr double kPi = std::numbers::pi;

double eval1(const VectorField& f, double x) {
    std::array<double, 1> out{};
    f.eval(std::span<const double>(&x, 1), out);
    return out[0];
}

double flow1(const CoverFlowFn& flow, double t, double x) {
    std::array<double, 1> out{};
    flow(t, std::span<const double>(&x, 1), out);
    return out[0];
}

TorusPoint random_point(const VectorField& f, const CounterRng& rng, std::uint64_t id) {
    std::vector<double> v(static_cast<std::size_t>(f.dim()));
    for (int i = 0; i < f.dim(); ++i)
        v[static_cast<std::size_t>(i)] =
            f.geom.period * rng.uniform01(id, static_cast<std::uint32_t>(i));
    return wrap(v, f.geom);
}

} // namespace

TEST_CASE("catalog lookup and capability flags") {
    const VectorField cosine = builtin_field("cosine");
    CHECK(cosine.dim() == 1);
    CHECK(cosine.has_exact_flow());
    CHECK(cosine.has_split());

    const VectorField constant = builtin_field("constant");
    CHECK(constant.has_exact_flow());
    CHECK(constant.has_split());

    const VectorField shear = builtin_field("sine-shear");
    CHECK(shear.dim() == 2);
    CHECK(!shear.has_exact_flow());
    CHECK(!shear.has_split());

    CHECK_THROWS_AS((void)builtin_field("unknown"), lookup_error);
    CHECK_THROWS_AS((void)default_geometry("unknown"), lookup_error);
    CHECK_THROWS_AS((void)cosine_field(TorusGeometry{2, 2.0 * kPi}), std::domain_error);
    CHECK_THROWS_AS((void)cosine_field(TorusGeometry{1, 1.0}), std::domain_error);
    CHECK_THROWS_AS((void)constant_field(TorusGeometry{2, 1.0}, {1.0}), std::domain_error);
}

TEST_CASE("field evaluations at pinned points") {
    const VectorField cosine = builtin_field("cosine");
    CHECK(eval1(cosine, 0.0) == 1.0);
    CHECK(eval1(cosine, 0.5 * kPi) == doctest::Approx(0.0).epsilon(1e-15));
    std::array<double, 1> j{};
    const std::array<double, 1> origin{0.0};
    cosine.jacobian(std::span<const double>(origin), j);
    CHECK(j[0] == doctest::Approx(0.0).epsilon(1e-15));

    const VectorField constant = builtin_field("constant");
    CHECK(eval1(constant, 1.7) == 1.0);
    CHECK(flow1(constant.exact_flow, 0.3, 0.0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(flow_exact(constant, 0.3, wrap({0.0}, constant.geom)).coords[0] ==
          doctest::Approx(0.3).epsilon(1e-15));

    const VectorField shear = builtin_field("sine-shear");
    std::array<double, 2> out{};
    const std::array<double, 2> x{0.3, 1.1};
    shear.eval(std::span<const double>(x), out);
    CHECK(out[0] == doctest::Approx(std::sin(1.1)).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(std::cos(0.3)).epsilon(1e-15));
}

TEST_CASE("jacobians match finite differences of eval") {
    const CounterRng rng{3};
    for (const char* key : {"cosine", "constant", "sine-shear"}) {
        const VectorField f = builtin_field(key);
        const int d = f.dim();
        const double h = 1e-5 * f.geom.period;
        std::vector<double> jac(static_cast<std::size_t>(d * d));
        std::vector<double> sp(static_cast<std::size_t>(d)), sm(static_cast<std::size_t>(d));
        for (std::uint64_t id = 0; id < 20; ++id) {
            const TorusPoint p = random_point(f, rng, id);
            f.jacobian(p.coords, jac);
            std::vector<double> x = p.coords;
            for (int col = 0; col < d; ++col) {
                x[static_cast<std::size_t>(col)] += h;
                f.eval(x, sp);
                x[static_cast<std::size_t>(col)] -= 2.0 * h;
                f.eval(x, sm);
                x[static_cast<std::size_t>(col)] = p.coords[static_cast<std::size_t>(col)];
                for (int row = 0; row < d; ++row) {
                    const double fd = (sp[static_cast<std::size_t>(row)] -
                                       sm[static_cast<std::size_t>(row)]) /
                                      (2.0 * h);
                    CHECK(fd == doctest::Approx(jac[static_cast<std::size_t>(row * d + col)])
                                    .epsilon(1e-6));
                }
            }
        }
    }
}

TEST_CASE("eval is periodic across representatives") {
    const CounterRng rng{5};
    for (const char* key : {"cosine", "sine-shear"}) {
        const VectorField f = builtin_field(key);
        const int d = f.dim();
        std::vector<double> a(static_cast<std::size_t>(d)), b(static_cast<std::size_t>(d));
        std::vector<double> sa(static_cast<std::size_t>(d)), sb(static_cast<std::size_t>(d));
        for (std::uint64_t id = 0; id < 30; ++id) {
            for (int i = 0; i < d; ++i) {
                a[static_cast<std::size_t>(i)] =
                    f.geom.period * rng.uniform01(id, static_cast<std::uint32_t>(i));
                const int k =
                    static_cast<int>(rng.uniform01(id, static_cast<std::uint32_t>(i) + 4) * 7) -
                    3;
                b[static_cast<std::size_t>(i)] =
                    a[static_cast<std::size_t>(i)] + k * f.geom.period;
            }
            f.eval(a, sa);
            f.eval(b, sb);
            for (int i = 0; i < d; ++i)
                CHECK(sa[static_cast<std::size_t>(i)] ==
                      doctest::Approx(sb[static_cast<std::size_t>(i)]).epsilon(1e-10));
        }
    }
}

TEST_CASE("cosine exact flow equals the Gudermannian on the main branch") {
    const VectorField cosine = builtin_field("cosine");
    // frozen: gd(0.1) = 2 atan(tanh(0.05))
    CHECK(flow1(cosine.exact_flow, 0.1, 0.0) ==
          doctest::Approx(0.09983374879348662).epsilon(1e-13));
    CHECK(flow1(cosine.exact_flow, 1.0, 0.0) ==
          doctest::Approx(0.8657694832396586).epsilon(1e-13));
    // identity at t = 0 is exact
    CHECK(flow1(cosine.exact_flow, 0.0, 1.2345) == 1.2345);
}

TEST_CASE("cosine exact flow validated against the substepped reference on both branches") {
    const VectorField cosine = builtin_field("cosine");
    const FlowRef ref = make_flow_ref(cosine);
    const CounterRng rng{7};
    for (std::uint64_t i = 0; i < 24; ++i) {
        const double x = cosine.geom.period * rng.uniform01(i, 0);
        const double t = 2.4 * (rng.uniform01(i, 1) - 0.5);
        const TorusPoint p = wrap({x}, cosine.geom);
        const TorusPoint closed = flow_exact(cosine, t, p);
        const TorusPoint reference = flow_reference(ref, t, p, 1e-12);
        CHECK(dist(closed, reference) < 1e-10);
    }
    // flow_reference(0.1, 0) matches gd(0.1): two independent routes agree
    CHECK(flow_reference(ref, 0.1, wrap({0.0}, cosine.geom), 1e-12).coords[0] ==
          doctest::Approx(0.09983374879348662).epsilon(1e-11));
}

TEST_CASE("exact flows satisfy the flow ODE and the group law") {
    const CounterRng rng{11};
    for (const char* key : {"cosine", "constant"}) {
        const VectorField f = builtin_field(key);
        const double h = 1e-6;
        for (std::uint64_t i = 0; i < 40; ++i) {
            const double x = f.geom.period * rng.uniform01(i, 0);
            const double t1 = 2.0 * (rng.uniform01(i, 1) - 0.5);
            const double t2 = 2.0 * (rng.uniform01(i, 2) - 0.5);
            // d/dt phi(t, x) = sigma(phi(t, x)) by central differences
            const double fp = flow1(f.exact_flow, t1 + h, x);
            const double fm = flow1(f.exact_flow, t1 - h, x);
            const double phi = flow1(f.exact_flow, t1, x);
            CHECK((fp - fm) / (2.0 * h) == doctest::Approx(eval1(f, phi)).epsilon(1e-6));
            // group law phi(t1 + t2, x) = phi(t2, phi(t1, x))
            const double direct = flow1(f.exact_flow, t1 + t2, x);
            const double composed = flow1(f.exact_flow, t2, phi);
            CHECK(direct == doctest::Approx(composed).epsilon(1e-12));
        }
    }
}

TEST_CASE("flow map Lipschitz and bounded-drift estimates") {
    const VectorField f = builtin_field("cosine");
    const CounterRng rng{13};
    for (std::uint64_t i = 0; i < 60; ++i) {
        const TorusPoint x1 = random_point(f, rng, 2 * i);
        const TorusPoint x2 = random_point(f, rng, 2 * i + 1);
        const double t = 2.0 * (rng.uniform01(i, 4) - 0.5);
        const double dt = rng.uniform01(i, 5) - 0.5;
        // d(phi(t,x1), phi(t,x2)) <= e^{C|t|} d(x1,x2), C = sup |sigma'|
        CHECK(dist(flow_exact(f, t, x1), flow_exact(f, t, x2)) <=
              std::exp(f.jacobian_bound * std::fabs(t)) * dist(x1, x2) + 1e-10);
        // d(phi(t1,x), phi(t2,x)) <= sup |sigma| |t2 - t1|
        CHECK(dist(flow_exact(f, t, x1), flow_exact(f, t + dt, x1)) <=
              f.sigma_bound * std::fabs(dt) + 1e-10);
    }
}

TEST_CASE("flow_reference on the constant field is exact") {
    const VectorField f = builtin_field("constant");
    const FlowRef ref = make_flow_ref(f);
    const TorusPoint x0 = wrap({0.0}, f.geom);
    CHECK(flow_reference(ref, 1.0, x0, 1e-12).coords[0] == 1.0);
    CHECK_THROWS_AS((void)flow_reference(ref, 1.0, x0, -1.0), std::domain_error);
}

TEST_CASE("flow_reference group law and negative times") {
    const VectorField f = builtin_field("cosine");
    const FlowRef ref = make_flow_ref(f);
    const CounterRng rng{17};
    for (std::uint64_t i = 0; i < 6; ++i) {
        const double t = 1.5 * (rng.uniform01(i, 0) - 0.5);
        const TorusPoint x = random_point(f, rng, i);
        const TorusPoint fwd = flow_reference(ref, t, x, 1e-12);
        const TorusPoint back = flow_reference(ref, -t, fwd, 1e-12);
        CHECK(dist(back, x) < 1e-11);
    }
}

TEST_CASE("substep refinement is a Cauchy sequence") {
    const VectorField f = builtin_field("cosine");
    const FlowRef ref = make_flow_ref(f);
    const double t = 0.7;
    std::array<double, 1> cur{}, next{};
    auto run = [&](long n) {
        cur[0] = 1.0;
        const double h = t / static_cast<double>(n);
        for (long i = 0; i < n; ++i) {
            ref.base_step(h, cur, next);
            cur = next;
        }
        return cur[0];
    };
    double prev_change = 1e300;
    double prev = run(8);
    for (long n = 16; n <= 1024; n *= 2) {
        const double val = run(n);
        const double change = std::fabs(val - prev);
        CHECK(change < prev_change);
        prev_change = change;
        prev = val;
    }
}

TEST_CASE("cosine split: parts sum to the field and solve their own ODEs") {
    const VectorField f = builtin_field("cosine");
    REQUIRE(f.has_split());
    const FieldSplit& split = *f.split;
    const CounterRng rng{19};
    for (std::uint64_t i = 0; i < 40; ++i) {
        const double x = f.geom.period * rng.uniform01(i, 0);
        std::array<double, 1> s1{}, s2{};
        split.eval1(std::span<const double>(&x, 1), s1);
        split.eval2(std::span<const double>(&x, 1), s2);
        CHECK(s1[0] + s2[0] == doctest::Approx(eval1(f, x)).epsilon(1e-14));

        const double t = 2.0 * (rng.uniform01(i, 1) - 0.5);
        const double h = 1e-6;
        // each split flow solves dx/dt = sigma_k(x)
        const double d1 =
            (flow1(split.flow1, t + h, x) - flow1(split.flow1, t - h, x)) / (2 * h);
        std::array<double, 1> rhs{};
        const double phi1 = flow1(split.flow1, t, x);
        split.eval1(std::span<const double>(&phi1, 1), rhs);
        CHECK(d1 == doctest::Approx(rhs[0]).epsilon(1e-6));
        CHECK(flow1(split.flow2, t, x) == doctest::Approx(x - t).epsilon(1e-15));
        // split flows are genuinely non-commuting (Strang is exercised)
        const double ab = flow1(split.flow1, 0.4, flow1(split.flow2, 0.4, x));
        const double ba = flow1(split.flow2, 0.4, flow1(split.flow1, 0.4, x));
        if (std::fabs(std::cos(x)) > 0.2) CHECK(std::fabs(ab - ba) > 1e-4);
    }
}

TEST_CASE("exact flows commute with lattice shifts") {
    const CounterRng rng{23};
    for (const char* key : {"cosine", "constant"}) {
        const VectorField f = builtin_field(key);
        for (std::uint64_t i = 0; i < 30; ++i) {
            const double x = f.geom.period * rng.uniform01(i, 0);
            const double t = 2.0 * (rng.uniform01(i, 1) - 0.5);
            const int k = static_cast<int>(rng.uniform01(i, 2) * 7) - 3;
            const double base = flow1(f.exact_flow, t, x);
            const double shifted = flow1(f.exact_flow, t, x + k * f.geom.period);
            CHECK(shifted - k * f.geom.period == doctest::Approx(base).epsilon(1e-10));
        }
    }
}

TEST_CASE("flow_exact demands the capability") {
    const VectorField shear = builtin_field("sine-shear");
    CHECK_THROWS_AS((void)flow_exact(shear, 0.1, wrap({0.0, 0.0}, shear.geom)),
                    capability_error);
}
