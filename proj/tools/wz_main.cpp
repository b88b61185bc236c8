// wz: experiment driver for multiscale SDE schemes on the torus.
//
// Subcommands: convergence, integrator-check, ou-check, ap-check.
// Exit codes: 0 pass, 1 check failed, 2 configuration error, 3 numerical
// error. WZ_THREADS caps the worker count (default: all cores); results are
// bit-identical for any worker count.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wz/wz.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;

struct CommonOpts {
    std::string field = "cosine";
    std::string integrator = "heun";
    std::string mode = "multiscale";
    std::string reference = "exact";
    std::string eps = "0.04,0.02,0.01";
    std::string dt = "2^-6..2^-12";
    std::string x0;
    double T = 1.0;
    double m0 = 0.0;
    double p = 2.0;
    std::string dt_ref = "2^-18";
    long samples = 1000;
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out;
};

/// Reads a flat key=value config file and returns "--key value" tokens.
/// Injected before the explicit flags, which therefore take precedence.
std::vector<std::string> config_file_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw wz::lookup_error("cannot open config file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq <= first)
            throw wz::lookup_error("config file: expected key=value, got '" + line + "'");
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw wz::lookup_error("config file: empty key or value in '" + line + "'");
        tokens.push_back("--" + key);
        tokens.push_back(value);
    }
    return tokens;
}

/// Splices config-file tokens right after the subcommand name, so explicit
/// command-line flags (parsed later, with take-last policy) override them.
std::vector<std::string> splice_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::size_t sub_pos = 1;
    while (sub_pos < args.size() && !args[sub_pos].empty() && args[sub_pos][0] == '-')
        ++sub_pos;
    std::string config_path;
    for (std::size_t i = sub_pos; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config_path = args[i].substr(9);
    }
    if (config_path.empty() || sub_pos >= args.size()) return args;
    const std::vector<std::string> injected = config_file_tokens(config_path);
    std::vector<std::string> out(args.begin(), args.begin() + sub_pos + 1);
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + sub_pos + 1, args.end());
    return out;
}

void add_common_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd->add_option("--field", o.field, "vector field key (cosine|constant|sine-shear)")
        ->capture_default_str();
    cmd->add_option("--integrator", o.integrator,
                    "integrator kind (taylor2|midpoint|heun|strang|euler|exact)")
        ->capture_default_str();
    cmd->add_option("--eps", o.eps, "epsilon values, comma separated")->capture_default_str();
    cmd->add_option("--dt", o.dt, "time steps: decimals, 2^-k, or a range 2^-a..2^-b")
        ->capture_default_str();
    cmd->add_option("--samples", o.samples, "Monte Carlo samples")->capture_default_str();
    cmd->add_option("--seed", o.seed, "stream seed")->capture_default_str();
    cmd->add_option("--T", o.T, "final time")->capture_default_str();
    cmd->add_option("--x0", o.x0, "initial point, comma separated (default: origin)");
    cmd->add_option("--m0", o.m0, "initial OU value")->capture_default_str();
    cmd->add_option("--config", o.config_path,
                    "flat key=value config file; flags override it");
}

wz::ExperimentConfig to_config(const CommonOpts& o) {
    wz::ExperimentConfig cfg;
    cfg.field_key = o.field;
    cfg.integrator_kind = o.integrator;
    cfg.mode = wz::parse_scheme_mode(o.mode);
    cfg.reference = wz::parse_reference_mode(o.reference);
    cfg.T = o.T;
    cfg.eps_list = wz::parse_value_list(o.eps);
    cfg.dt_list = wz::parse_value_list(o.dt);
    const std::vector<double> dt_ref = wz::parse_value_list(o.dt_ref);
    if (dt_ref.size() != 1) throw wz::lookup_error("--dt-ref takes a single value");
    cfg.dt_ref = dt_ref[0];
    cfg.samples = o.samples;
    cfg.p = o.p;
    cfg.seed = o.seed;
    if (!o.x0.empty()) cfg.x0 = wz::parse_value_list(o.x0);
    cfg.m0 = o.m0;
    return cfg;
}

int cmd_convergence(const CommonOpts& o) {
    const wz::ExperimentConfig cfg = to_config(o);
    const wz::StudyResult res = wz::run_convergence_study(cfg);

    std::ostream* csv = &std::cout;
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::binary);
        if (!file) {
            std::cerr << "cannot open output file: " << o.out << "\n";
            return kExitConfigError;
        }
        csv = &file;
    }
    wz::write_csv(res.table, *csv);
    csv->flush();

    std::ostream& summary = o.out.empty() ? std::cerr : std::cout;
    summary << "# field=" << cfg.field_key << " integrator=" << cfg.integrator_kind
            << " mode=" << wz::to_string(cfg.mode)
            << " reference=" << wz::to_string(cfg.reference) << " samples=" << cfg.samples
            << " seed=" << cfg.seed << "\n";
    for (const auto& r : res.rates) {
        summary << "# eps=" << r.eps << ": ";
        if (r.fit) {
            char buf[160];
            std::snprintf(buf, sizeof buf,
                          "slope=%.4f intercept=%.4f residual=%.4f rows=%d excluded=%d",
                          r.fit->slope, r.fit->intercept, r.fit->residual, r.fit->points_used,
                          r.fit->points_excluded);
            summary << buf << "\n";
        } else {
            summary << "no fit (" << r.note << ")\n";
        }
    }
    return kExitPass;
}

int cmd_integrator_check(const std::string& field_key, std::uint64_t seed, int points,
                         double h) {
    const wz::VectorField field = wz::builtin_field(field_key);
    const wz::CounterRng rng{seed};
    std::vector<wz::TorusPoint> order_samples, defect_samples;
    for (int i = 0; i < points; ++i) {
        std::vector<double> v(static_cast<std::size_t>(field.dim()));
        for (int j = 0; j < field.dim(); ++j)
            v[static_cast<std::size_t>(j)] =
                field.geom.period * rng.uniform01(static_cast<std::uint64_t>(i),
                                                  static_cast<std::uint32_t>(j));
        order_samples.push_back(wz::wrap(v, field.geom));
        if (i < 8) defect_samples.push_back(order_samples.back());
    }
    const std::vector<double> grid = wz::default_defect_grid();
    const bool constant_field = field.jacobian_bound == 0.0;

    std::printf("integrator-check: field=%s points=%d h=%g\n", field_key.c_str(), points, h);
    std::printf("%-10s %-12s %-12s %-12s %-18s %s\n", "kind", "d/dt", "d2/dt2", "d/dtdx",
                "defect p1+p2", "status");
    bool all_ok = true;
    for (const std::string& kind : wz::available_integrator_kinds(field)) {
        const wz::Integrator intg = wz::make_integrator(kind, field);
        const wz::OrderConditionReport rep = wz::check_order_conditions(intg, order_samples, h);
        const wz::DefectReport def = wz::fit_defect_scaling(intg, defect_samples, grid);

        bool ok;
        std::string note;
        if (intg.declared_order == wz::IntegratorOrder::first) {
            if (constant_field) {
                ok = rep.pass_all() && def.below_floor;
                note = "exact on constant sigma";
            } else if (rep.pass_dtt()) {
                ok = false;
                note = "unexpectedly passed the second-order identity";
            } else {
                ok = rep.pass_dt() && rep.pass_dtx() && def.pass;
                note = "expected d2/dt2 failure";
            }
        } else if (intg.declared_order == wz::IntegratorOrder::exact) {
            ok = rep.pass_all() && def.below_floor;
        } else {
            ok = rep.pass_all() && (def.pass || (constant_field && def.below_floor));
        }
        all_ok = all_ok && ok;

        char defect_col[32];
        if (def.below_floor)
            std::snprintf(defect_col, sizeof defect_col, "below floor");
        else
            std::snprintf(defect_col, sizeof defect_col, "%.2f=%.2f+%.2f", def.total(), def.p1,
                          def.p2);
        std::printf("%-10s %-12.3g %-12.3g %-12.3g %-18s %s%s%s\n", kind.c_str(), rep.err_dt,
                    rep.err_dtt, rep.err_dtx, defect_col, ok ? "ok" : "FAIL",
                    note.empty() ? "" : " - ", note.c_str());
    }
    return all_ok ? kExitPass : kExitCheckFailed;
}

int cmd_ou_check(const std::string& eps_spec, const std::string& dt_spec, long samples,
                 std::uint64_t seed, double m0, double T, double perturb_cov) {
    const std::vector<double> eps_list = wz::parse_value_list(eps_spec);
    const std::vector<double> dt_list = wz::parse_value_list(dt_spec);

    double max_dev = 0.0;
    std::printf("ou-check: samples=%ld seed=%llu m0=%g%s\n", samples,
                static_cast<unsigned long long>(seed), m0,
                perturb_cov != 0.0 ? " (covariance perturbed)" : "");
    std::printf("%-8s %-10s %-8s %-14s %-14s %-10s %s\n", "eps", "dt", "n", "mc", "oracle",
                "stderr", "|z|");
    for (const double eps : eps_list) {
        const wz::OUParams params{eps, m0};
        for (const double dt : dt_list) {
            const long n_steps = std::lround(T / dt);
            std::vector<long> checkpoints = {1, n_steps / 2, n_steps};
            std::sort(checkpoints.begin(), checkpoints.end());
            checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()),
                              checkpoints.end());
            while (!checkpoints.empty() && checkpoints.front() < 1)
                checkpoints.erase(checkpoints.begin());
            const auto mc =
                wz::coupling_mse_mc(params, dt, checkpoints, samples, seed, perturb_cov);
            for (std::size_t i = 0; i < checkpoints.size(); ++i) {
                const double oracle =
                    wz::moment_oracle(params, dt, checkpoints[i]).mse_coupling;
                const double se = mc[i].std_error;
                const double dev = se > 0.0 ? std::fabs(mc[i].value - oracle) / se
                                            : (mc[i].value == oracle ? 0.0 : 1e300);
                max_dev = std::max(max_dev, dev);
                std::printf("%-8g %-10g %-8ld %-14.6e %-14.6e %-10.2e %.2f\n", eps, dt,
                            checkpoints[i], mc[i].value, oracle, se, dev);
            }
        }
    }

    // zero-noise smoke: the deterministic parts of both chains decay exactly
    bool smoke_ok = true;
    {
        const wz::OUParams params{0.3, 1.0};
        const double dt = 0x1p-6;
        const int n = 64;
        const auto paths = wz::sample_paths_with(params, dt, n, [](std::uint32_t) {
            return wz::GaussianPair{0.0, 0.0};
        });
        const double r = dt / (params.epsilon * params.epsilon);
        for (int i = 0; i <= n; ++i) {
            const double exact = std::exp(-i * r);
            const double disc = std::exp(-i * std::log1p(r));
            smoke_ok = smoke_ok &&
                       std::fabs(paths.m_exact[static_cast<std::size_t>(i)] - exact) < 1e-12 &&
                       std::fabs(paths.m_disc[static_cast<std::size_t>(i)] - disc) < 1e-12;
        }
    }
    std::printf("zero-noise decay identities: %s\n", smoke_ok ? "ok" : "FAIL");
    std::printf("max standardized deviation: %.2f (threshold 4)\n", max_dev);
    return (max_dev <= 4.0 && smoke_ok) ? kExitPass : kExitCheckFailed;
}

int cmd_ap_check(const CommonOpts& o) {
    wz::ExperimentConfig cfg = to_config(o);
    const wz::ApReport rep = wz::ap_check(cfg);

    auto print_header = [&] {
        std::printf("%-10s", "eps\\dt");
        for (double dt : rep.dt_list) std::printf(" %-12g", dt);
        std::printf("\n");
    };
    std::printf("ap-check: field=%s integrator=%s samples=%ld seed=%llu\n",
                cfg.field_key.c_str(), cfg.integrator_kind.c_str(), cfg.samples,
                static_cast<unsigned long long>(cfg.seed));
    std::printf("consistency d_p(X^(eps,dt), X^eps(T)):\n");
    print_header();
    for (std::size_t e = 0; e < rep.eps_list.size(); ++e) {
        std::printf("%-10g", rep.eps_list[e]);
        for (std::size_t j = 0; j < rep.dt_list.size(); ++j)
            std::printf(" %-12.4e", rep.cells[e][j].consistency);
        std::printf("\n");
    }
    std::printf("distance to the limiting scheme d_p(X^(eps,dt), X^(0,dt)):\n");
    print_header();
    for (std::size_t e = 0; e < rep.eps_list.size(); ++e) {
        std::printf("%-10g", rep.eps_list[e]);
        for (std::size_t j = 0; j < rep.dt_list.size(); ++j)
            std::printf(" %-12.4e", rep.cells[e][j].to_limit);
        std::printf("\n");
    }
    std::printf("%-10s", "limiting");
    for (std::size_t j = 0; j < rep.dt_list.size(); ++j)
        std::printf(" %-12.4e", rep.limiting_consistency[j]);
    std::printf("\n");
    std::printf("trend dt->0 at fixed eps: %s\n", rep.dt_trend_pass ? "PASS" : "FAIL");
    std::printf("trend eps->0 then dt->0:  %s\n", rep.eps_trend_pass ? "PASS" : "FAIL");
    return rep.pass() ? kExitPass : kExitCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "multiscale SDE scheme experiments on the torus\n"
        "WZ_THREADS caps the worker count; results are identical for any value."};
    app.require_subcommand(1);

    CommonOpts conv;
    CLI::App* conv_cmd = app.add_subcommand(
        "convergence", "strong-error sweep over (eps, dt); emits CSV and a rate summary");
    add_common_flags(conv_cmd, conv);
    conv_cmd->add_option("--mode", conv.mode, "multiscale|limiting")
        ->check(CLI::IsMember({"multiscale", "limiting"}))
        ->capture_default_str();
    conv_cmd->add_option("--reference", conv.reference, "exact|fine")
        ->check(CLI::IsMember({"exact", "fine"}))
        ->capture_default_str();
    conv_cmd->add_option("--dt-ref", conv.dt_ref, "fine-mode reference step (decimal or 2^-k)")
        ->capture_default_str();
    conv_cmd->add_option("--p", conv.p, "L^p exponent of the strong error")
        ->capture_default_str();
    conv_cmd->add_option("--out", conv.out, "CSV output path (default: stdout)")
        ->capture_default_str();

    CommonOpts icheck;
    icheck.field = "cosine";
    int icheck_points = 32;
    double icheck_h = 1e-3;
    CLI::App* icheck_cmd = app.add_subcommand(
        "integrator-check", "order-condition and defect-scaling checks for the catalog");
    icheck_cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    icheck_cmd->add_option("--field", icheck.field, "vector field key")->capture_default_str();
    icheck_cmd->add_option("--seed", icheck.seed, "sample-point seed")->capture_default_str();
    icheck_cmd->add_option("--points", icheck_points, "number of sample points")
        ->capture_default_str();
    icheck_cmd->add_option("--fd-step", icheck_h, "finite-difference step")->capture_default_str();
    icheck_cmd->add_option("--config", icheck.config_path,
                           "flat key=value config file; flags override it");

    CommonOpts ou;
    ou.eps = "0.03,0.1,0.3";
    ou.dt = "2^-6,2^-10,2^-14";
    ou.samples = 100000;
    ou.m0 = 1.0;
    double ou_perturb = 0.0;
    CLI::App* ou_cmd = app.add_subcommand(
        "ou-check", "closed-form OU coupling moments against Monte Carlo");
    ou_cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    ou_cmd->add_option("--eps", ou.eps, "epsilon values")->capture_default_str();
    ou_cmd->add_option("--dt", ou.dt, "time steps")->capture_default_str();
    ou_cmd->add_option("--samples", ou.samples, "Monte Carlo samples")->capture_default_str();
    ou_cmd->add_option("--seed", ou.seed, "stream seed")->capture_default_str();
    ou_cmd->add_option("--m0", ou.m0, "initial OU value")->capture_default_str();
    ou_cmd->add_option("--T", ou.T, "final time")->capture_default_str();
    ou_cmd->add_option("--perturb-cov", ou_perturb,
                       "scale the sampled Cov(dbeta, I) by (1+x); nonzero values must fail")
        ->capture_default_str();
    ou_cmd->add_option("--config", ou.config_path,
                       "flat key=value config file; flags override it");

    CommonOpts ap;
    ap.eps = "0.1,0.01,0.001";
    ap.dt = "2^-6,2^-10,2^-14";
    ap.samples = 400;
    CLI::App* ap_cmd = app.add_subcommand(
        "ap-check", "asymptotic-preserving diagram: both iterated-limit trends");
    add_common_flags(ap_cmd, ap);

    std::vector<std::string> arg_list;
    try {
        arg_list = splice_config(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    }
    // CLI11 takes the argument list in reverse, without the program name
    std::vector<std::string> reversed(arg_list.rbegin(), arg_list.rend());
    reversed.pop_back();
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitConfigError;
    }

    try {
        if (conv_cmd->parsed()) return cmd_convergence(conv);
        if (icheck_cmd->parsed())
            return cmd_integrator_check(icheck.field, icheck.seed, icheck_points, icheck_h);
        if (ou_cmd->parsed())
            return cmd_ou_check(ou.eps, ou.dt, ou.samples, ou.seed, ou.m0, ou.T, ou_perturb);
        if (ap_cmd->parsed()) return cmd_ap_check(ap);
    } catch (const wz::lookup_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const wz::capability_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::domain_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumericalError;
    }
    return kExitConfigError;
}
