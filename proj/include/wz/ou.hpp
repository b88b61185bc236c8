#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "wz/parallel.hpp"
#include "wz/rng.hpp"
#include "wz/torus.hpp"

namespace wz {

/// Fast Ornstein-Uhlenbeck component: dm = -m/eps^2 dt + dbeta/eps.
struct OUParams {
    double epsilon = 0.1;  ///< time-scale separation, in (0, eps0]
    double m0 = 0.0;       ///< deterministic initial value
};

inline void validate(const OUParams& p) {
    if (!is_finite_value(p.epsilon) || !(p.epsilon > 0.0))
        throw std::domain_error("ou: epsilon must be positive and finite");
    if (!is_finite_value(p.m0)) throw std::domain_error("ou: m0 must be finite");
}

/// Per-step quantities shared by every consumer of the OU updates.
///
/// Over one step of size dt, with r = dt/eps^2 and a = e^-r, the pair
///   dbeta = beta(t+dt) - beta(t),
///   I     = int_t^{t+dt} e^-((t+dt-s)/eps^2) dbeta(s)
/// is centered Gaussian with
///   Var(dbeta) = dt,
///   Cov(dbeta, I) = eps^2 (1 - a),
///   Var(I) = (eps^2/2)(1 - a^2) = (eps^2/2)(1-a)(2-(1-a)).
/// l11/l21/l22 hold the Cholesky factor of that covariance. The conditional
/// variance l22^2 = eps^2 (1-a) g with g = 1 - (1-a)/2 - (1-a)/r cancels
/// catastrophically for small r, so g switches to its series there.
struct OUStepCoeffs {
    double dt = 0.0;
    double epsilon = 1.0;
    double inv_eps = 1.0;
    double ratio = 0.0;  ///< dt / eps^2
    double decay = 1.0;  ///< e^-ratio
    double gain = 1.0;   ///< 1 / (1 + ratio), the implicit-Euler factor
    double l11 = 0.0;
    double l21 = 0.0;
    double l22 = 0.0;

    [[nodiscard]] double var_dbeta() const { return dt; }
    [[nodiscard]] double cov_dbeta_integral() const {
        return epsilon * epsilon * (-std::expm1(-ratio));
    }
    [[nodiscard]] double var_integral() const {
        const double em = -std::expm1(-ratio);
        return 0.5 * epsilon * epsilon * em * (2.0 - em);
    }

    [[nodiscard]] static OUStepCoeffs make(const OUParams& params, double dt) {
        validate(params);
        if (!is_finite_value(dt) || !(dt > 0.0))
            throw std::domain_error("ou: dt must be positive and finite");
        OUStepCoeffs c;
        c.dt = dt;
        c.epsilon = params.epsilon;
        c.inv_eps = 1.0 / params.epsilon;
        c.ratio = dt / (params.epsilon * params.epsilon);
        c.decay = std::exp(-c.ratio);
        c.gain = 1.0 / (1.0 + c.ratio);
        c.l11 = std::sqrt(dt);
        const double em = -std::expm1(-c.ratio);
        const double eps2 = params.epsilon * params.epsilon;
        c.l21 = eps2 * em / c.l11;
        double g;
        if (c.ratio < 0.02) {
            const double r = c.ratio;
            g = r * r / 12.0 - r * r * r / 24.0 + r * r * r * r / 80.0 -
                r * r * r * r * r / 360.0;
        } else {
            g = 1.0 - 0.5 * em - em / c.ratio;
        }
        c.l22 = params.epsilon * std::sqrt(std::max(0.0, em * g));
        return c;
    }
};

/// m_{n+1} = (m_n + dbeta/eps) / (1 + dt/eps^2); the single definition every
/// discrete chain in the project uses, so coupled chains agree bit for bit.
[[nodiscard]] inline double implicit_euler_update(double m, double dbeta,
                                                  const OUStepCoeffs& c) {
    return c.gain * (m + dbeta * c.inv_eps);
}

/// m(t_{n+1}) = e^-(dt/eps^2) m(t_n) + I_n/eps, exact in law at grid nodes.
[[nodiscard]] inline double exact_ou_update(double m, double integral, const OUStepCoeffs& c) {
    return c.decay * m + integral * c.inv_eps;
}

/// Coupled grid samples of the driving noise, the exact OU process, the
/// implicit-Euler chain, and zeta(t) = (1/eps) int_0^t m ds.
struct OUPaths {
    OUParams params;
    double dt = 0.0;
    int n_steps = 0;
    std::vector<double> dbeta;     ///< N increments
    std::vector<double> integral;  ///< N exponentially weighted integrals I_n
    std::vector<double> beta;      ///< N+1 running sums
    std::vector<double> m_exact;   ///< N+1
    std::vector<double> m_disc;    ///< N+1
    std::vector<double> zeta;      ///< N+1, zeta_n = beta_n + eps (m0 - m_exact_n)
};

/// Exact-in-law joint sampling driven by an arbitrary per-step noise source
/// (step -> GaussianPair). The implicit-Euler chain consumes the same
/// increments as the exact process.
template <class NoiseFn>
[[nodiscard]] OUPaths sample_paths_with(const OUParams& params, double dt, int n_steps,
                                        NoiseFn&& noise) {
    if (n_steps < 0) throw std::domain_error("ou: n_steps must be >= 0");
    const OUStepCoeffs c = OUStepCoeffs::make(params, dt);
    OUPaths p;
    p.params = params;
    p.dt = dt;
    p.n_steps = n_steps;
    p.dbeta.resize(static_cast<std::size_t>(n_steps));
    p.integral.resize(static_cast<std::size_t>(n_steps));
    p.beta.assign(static_cast<std::size_t>(n_steps) + 1, 0.0);
    p.m_exact.assign(static_cast<std::size_t>(n_steps) + 1, params.m0);
    p.m_disc.assign(static_cast<std::size_t>(n_steps) + 1, params.m0);
    p.zeta.assign(static_cast<std::size_t>(n_steps) + 1, 0.0);
    for (int n = 0; n < n_steps; ++n) {
        const GaussianPair z = noise(static_cast<std::uint32_t>(n));
        const double db = c.l11 * z.z0;
        const double integral = c.l21 * z.z0 + c.l22 * z.z1;
        p.dbeta[n] = db;
        p.integral[n] = integral;
        p.beta[n + 1] = p.beta[n] + db;
        p.m_disc[n + 1] = implicit_euler_update(p.m_disc[n], db, c);
        p.m_exact[n + 1] = exact_ou_update(p.m_exact[n], integral, c);
        p.zeta[n + 1] = p.beta[n + 1] + params.epsilon * (params.m0 - p.m_exact[n + 1]);
    }
    return p;
}

[[nodiscard]] inline OUPaths sample_paths(const OUParams& params, double dt, int n_steps,
                                          const CounterRng& rng, std::uint64_t sample_index) {
    return sample_paths_with(params, dt, n_steps, [&](std::uint32_t step) {
        return rng.normal_pair(sample_index, step);
    });
}

namespace detail {

/// One coarsening pass by an integer factor. Node fields are subsampled,
/// increments are differences of the running sum, and the weighted integrals
/// are re-aggregated with the fine decay:
///   I_coarse = sum_j decay^(f-1-j) I_fine[j]  (Horner form).
[[nodiscard]] inline OUPaths coarsen_by_factor(const OUPaths& p, int factor) {
    const OUStepCoeffs fine = OUStepCoeffs::make(p.params, p.dt);
    OUPaths c;
    c.params = p.params;
    c.dt = p.dt * factor;
    c.n_steps = p.n_steps / factor;
    const std::size_t nc = static_cast<std::size_t>(c.n_steps);
    c.dbeta.resize(nc);
    c.integral.resize(nc);
    c.beta.resize(nc + 1);
    c.m_exact.resize(nc + 1);
    c.m_disc.resize(nc + 1);
    c.zeta.resize(nc + 1);
    for (std::size_t i = 0; i <= nc; ++i) {
        const std::size_t j = i * static_cast<std::size_t>(factor);
        c.beta[i] = p.beta[j];
        c.m_exact[i] = p.m_exact[j];
        c.zeta[i] = p.zeta[j];
    }
    const OUStepCoeffs coarse = OUStepCoeffs::make(p.params, c.dt);
    c.m_disc[0] = p.m_disc[0];
    for (std::size_t i = 0; i < nc; ++i) {
        const std::size_t j0 = i * static_cast<std::size_t>(factor);
        c.dbeta[i] = p.beta[j0 + static_cast<std::size_t>(factor)] - p.beta[j0];
        double acc = p.integral[j0];
        for (int j = 1; j < factor; ++j)
            acc = fine.decay * acc + p.integral[j0 + static_cast<std::size_t>(j)];
        c.integral[i] = acc;
        c.m_disc[i + 1] = implicit_euler_update(c.m_disc[i], c.dbeta[i], coarse);
    }
    return c;
}

[[nodiscard]] inline int smallest_factor(int k) {
    for (int f = 2; f * f <= k; ++f)
        if (k % f == 0) return f;
    return k;
}

} // namespace detail

/// Coarsen by an integer divisor of n_steps. Factored into passes by the
/// smallest prime factor, so coarsening twice by 2 and once by 4 run the same
/// instructions and agree bit for bit.
[[nodiscard]] inline OUPaths coarsen(const OUPaths& p, int k) {
    if (k < 1 || p.n_steps % k != 0)
        throw std::domain_error("ou: coarsen factor must divide n_steps");
    if (k == 1) return p;
    const int f = detail::smallest_factor(k);
    const OUPaths once = detail::coarsen_by_factor(p, f);
    return coarsen(once, k / f);
}

/// Closed-form marginals of the two chains plus the coupling mean-square
/// error, all at step n.
struct OUMoments {
    double mean_disc = 0.0;
    double var_disc = 0.0;
    double mean_exact = 0.0;
    double var_exact = 0.0;
    double mse_coupling = 0.0;  ///< E |m_disc_n - m_exact(t_n)|^2
};

/// Marginals come from the geometric/exponential closed forms; the coupling
/// MSE runs the joint (mean, covariance) recursion of the pair
/// (m_disc, m_exact) under the per-step covariances of OUStepCoeffs.
[[nodiscard]] inline OUMoments moment_oracle(const OUParams& params, double dt, long n) {
    if (n < 0) throw std::domain_error("ou: n must be >= 0");
    const OUStepCoeffs c = OUStepCoeffs::make(params, dt);
    const double r = c.ratio;
    const double nd = static_cast<double>(n);

    OUMoments m;
    m.mean_disc = params.m0 * std::exp(-nd * std::log1p(r));
    m.var_disc = -std::expm1(-2.0 * nd * std::log1p(r)) / (2.0 + r);
    m.mean_exact = params.m0 * std::exp(-nd * r);
    m.var_exact = 0.5 * (-std::expm1(-2.0 * nd * r));

    const double em = -std::expm1(-r);  // 1 - decay
    double mu_d = params.m0, mu_e = params.m0;
    double vd = 0.0, ve = 0.0, cde = 0.0;
    for (long i = 0; i < n; ++i) {
        // m_d' = b (m_d + dbeta/eps), m_e' = a m_e + I/eps
        vd = c.gain * c.gain * (vd + r);
        ve = c.decay * c.decay * ve + 0.5 * em * (2.0 - em);
        cde = c.decay * c.gain * cde + c.gain * em;
        mu_d *= c.gain;
        mu_e *= c.decay;
    }
    const double dmu = mu_d - mu_e;
    m.mse_coupling = dmu * dmu + vd + ve - 2.0 * cde;
    return m;
}

/// Moments of zeta(t) - beta(t) = eps (m0 - m(t)); closed form for all t.
struct ZetaGapMoments {
    double mean = 0.0;
    double var = 0.0;
};

[[nodiscard]] inline ZetaGapMoments zeta_minus_beta_moments(const OUParams& params, double t) {
    validate(params);
    if (!(t >= 0.0)) throw std::domain_error("ou: t must be >= 0");
    const double z = t / (params.epsilon * params.epsilon);
    ZetaGapMoments g;
    g.mean = params.epsilon * params.m0 * (-std::expm1(-z));
    g.var = 0.5 * params.epsilon * params.epsilon * (-std::expm1(-2.0 * z));
    return g;
}

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long samples = 0;
};

/// Monte Carlo estimate of E |m_disc_n - m_exact(t_n)|^2 at the given step
/// checkpoints (sorted ascending), using the per-step exact coupling.
///
/// The sampler runs in fixed-size blocks laid out structure-of-arrays, with
/// the Box-Muller transform split into plain array passes so vector math
/// libraries apply. Chunk boundaries and the reduction order are fixed, so
/// the result is bit-identical for any worker count.
///
/// `cov_perturb` scales the sampled Cov(dbeta, I) by (1 + cov_perturb); it
/// exists to demonstrate that the oracle comparison detects a miscoded
/// covariance and must be 0 for correct sampling.
[[nodiscard]] inline std::vector<McEstimate> coupling_mse_mc(
    const OUParams& params, double dt, std::span<const long> checkpoints, long n_samples,
    std::uint64_t seed, double cov_perturb = 0.0) {
    if (checkpoints.empty()) return {};
    for (std::size_t i = 0; i + 1 < checkpoints.size(); ++i)
        if (checkpoints[i] >= checkpoints[i + 1])
            throw std::domain_error("ou: checkpoints must be strictly increasing");
    if (checkpoints.front() < 1) throw std::domain_error("ou: checkpoints start at 1");
    if (n_samples < 1) throw std::domain_error("ou: need at least one sample");

    OUStepCoeffs c = OUStepCoeffs::make(params, dt);
    c.l21 *= (1.0 + cov_perturb);

    constexpr std::int64_t kChunk = 4096;  // fixed: chunk layout defines the reduction order
    const long n_cp = static_cast<long>(checkpoints.size());
    const long n_steps = checkpoints.back();
    const std::int64_t n_chunks = (n_samples + kChunk - 1) / kChunk;
    std::vector<double> sum2(static_cast<std::size_t>(n_chunks * n_cp), 0.0);
    std::vector<double> sum4(static_cast<std::size_t>(n_chunks * n_cp), 0.0);

    const auto k0 = static_cast<std::uint32_t>(seed);
    const auto k1 = static_cast<std::uint32_t>(seed >> 32);
    constexpr double kTwoPi = 6.283185307179586476925286766559;

    for_each_chunk(n_samples, kChunk, [&](std::int64_t chunk, std::int64_t lo, std::int64_t hi) {
        const int lanes = static_cast<int>(hi - lo);
        std::vector<double> md(lanes, params.m0), me(lanes, params.m0);
        std::vector<double> u(lanes), v(lanes), rad(lanes), z0(lanes), z1(lanes);
        long cp = 0;
        for (long n = 0; n < n_steps; ++n) {
            const auto step = static_cast<std::uint32_t>(n);
            for (int s = 0; s < lanes; ++s) {
                const auto sample = static_cast<std::uint64_t>(lo + s);
                const RandomBlock b =
                    philox4x32(static_cast<std::uint32_t>(sample),
                               static_cast<std::uint32_t>(sample >> 32), step, 0u, k0, k1);
                u[s] = uniform_from_words(b.w[0], b.w[1]);
                v[s] = uniform_from_words(b.w[2], b.w[3]);
            }
            for (int s = 0; s < lanes; ++s) rad[s] = std::sqrt(-2.0 * std::log(u[s]));
            for (int s = 0; s < lanes; ++s) z0[s] = rad[s] * std::cos(kTwoPi * v[s]);
            for (int s = 0; s < lanes; ++s) z1[s] = rad[s] * std::sin(kTwoPi * v[s]);
            for (int s = 0; s < lanes; ++s) {
                const double db = c.l11 * z0[s];
                const double integral = c.l21 * z0[s] + c.l22 * z1[s];
                md[s] = c.gain * (md[s] + db * c.inv_eps);
                me[s] = c.decay * me[s] + integral * c.inv_eps;
            }
            if (n + 1 == checkpoints[cp]) {
                double s2 = 0.0, s4 = 0.0;
                for (int s = 0; s < lanes; ++s) {
                    const double d = md[s] - me[s];
                    const double d2 = d * d;
                    s2 += d2;
                    s4 += d2 * d2;
                }
                sum2[static_cast<std::size_t>(chunk * n_cp + cp)] = s2;
                sum4[static_cast<std::size_t>(chunk * n_cp + cp)] = s4;
                ++cp;
            }
        }
    });

    std::vector<McEstimate> out(static_cast<std::size_t>(n_cp));
    for (long cp = 0; cp < n_cp; ++cp) {
        double s2 = 0.0, s4 = 0.0;
        for (std::int64_t chunk = 0; chunk < n_chunks; ++chunk) {
            s2 += sum2[static_cast<std::size_t>(chunk * n_cp + cp)];
            s4 += sum4[static_cast<std::size_t>(chunk * n_cp + cp)];
        }
        const double m = static_cast<double>(n_samples);
        const double mean = s2 / m;
        const double var = std::max(0.0, s4 / m - mean * mean);
        out[static_cast<std::size_t>(cp)] =
            McEstimate{mean, std::sqrt(var / m), n_samples};
    }
    return out;
}

} // namespace wz
