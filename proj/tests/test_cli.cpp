#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

/// Runs the CLI through the shell, capturing stdout+stderr.
RunResult run_cli(const std::string& args, const std::string& env = "") {
    const std::string out_path = "/tmp/wz_cli_test_out.txt";
    const std::string cmd =
        env + " " + std::string(WZ_CLI_BIN) + " " + args + " > " + out_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, ss.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("help screens exist and document defaults") {
    const RunResult top = run_cli("--help");
    CHECK(top.exit_code == 0);
    CHECK(top.output.find("convergence") != std::string::npos);
    CHECK(top.output.find("integrator-check") != std::string::npos);
    CHECK(top.output.find("ou-check") != std::string::npos);
    CHECK(top.output.find("ap-check") != std::string::npos);
    CHECK(top.output.find("WZ_THREADS") != std::string::npos);

    for (const char* sub : {"convergence", "integrator-check", "ou-check", "ap-check"}) {
        const RunResult help = run_cli(std::string(sub) + " --help");
        CAPTURE(sub);
        CHECK(help.exit_code == 0);
        CHECK(help.output.find("--seed") != std::string::npos);
    }
    const RunResult conv = run_cli("convergence --help");
    for (const char* flag : {"--field", "--integrator", "--mode", "--eps", "--dt", "--samples",
                             "--p", "--reference", "--dt-ref", "--out", "--config"})
        CHECK(conv.output.find(flag) != std::string::npos);
}

TEST_CASE("configuration errors exit with code 2") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("bogus-subcommand").exit_code == 2);
    CHECK(run_cli("convergence --field nope --samples 10 --dt 2^-4").exit_code == 2);
    CHECK(run_cli("convergence --integrator nope --samples 10 --dt 2^-4").exit_code == 2);
    CHECK(run_cli("convergence --dt 0.3 --samples 10").exit_code == 2);
    CHECK(run_cli("convergence --dt abc").exit_code == 2);
    // exact reference requires an exact flow
    CHECK(run_cli("convergence --field sine-shear --x0 0,0 --dt 2^-4 --samples 4").exit_code ==
          2);
}

TEST_CASE("integrator-check passes on the catalog and fails when asked to misbehave") {
    const RunResult ok = run_cli("integrator-check --field cosine --points 16");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("expected d2/dt2 failure") != std::string::npos);
    CHECK(ok.output.find("below floor") != std::string::npos);
    CHECK(run_cli("integrator-check --field constant --points 8").exit_code == 0);
    CHECK(run_cli("integrator-check --field sine-shear --points 8").exit_code == 0);
}

TEST_CASE("ou-check accepts correct sampling and rejects a covariance bug") {
    const RunResult ok =
        run_cli("ou-check --eps 0.1,0.3 --dt 2^-6,2^-10 --samples 30000 --seed 3");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("max standardized deviation") != std::string::npos);
    CHECK(ok.output.find("zero-noise decay identities: ok") != std::string::npos);

    const RunResult bug = run_cli(
        "ou-check --eps 0.1 --dt 2^-6 --samples 30000 --seed 3 --perturb-cov 0.02");
    CHECK(bug.exit_code == 1);
}

TEST_CASE("ap-check: heun passes, euler reports the expected failure") {
    const std::string grid = " --eps 0.1,0.01,0.001 --dt 2^-6,2^-10,2^-14 --samples 120";
    CHECK(run_cli("ap-check" + grid).exit_code == 0);
    const RunResult euler = run_cli("ap-check --integrator euler" + grid);
    CHECK(euler.exit_code == 1);
    CHECK(euler.output.find("FAIL") != std::string::npos);
}

TEST_CASE("convergence writes deterministic CSV for any worker count") {
    const std::string args =
        "convergence --eps 0.04 --dt 2^-6..2^-8 --samples 200 --seed 9 --out /tmp/wz_csv_";
    CHECK(run_cli(args + "1.csv", "WZ_THREADS=1").exit_code == 0);
    CHECK(run_cli(args + "2.csv", "WZ_THREADS=2").exit_code == 0);
    CHECK(run_cli(args + "8.csv", "WZ_THREADS=8").exit_code == 0);
    const std::string one = slurp("/tmp/wz_csv_1.csv");
    CHECK(!one.empty());
    CHECK(one == slurp("/tmp/wz_csv_2.csv"));
    CHECK(one == slurp("/tmp/wz_csv_8.csv"));
    CHECK(one.substr(0, one.find('\n')) ==
          "epsilon,dt,p,error,stderr,samples,integrator,field,reference_mode");
}

TEST_CASE("flags override config-file values") {
    {
        std::ofstream cfg("/tmp/wz_test_config.ini");
        cfg << "field=cosine\nintegrator=heun\neps=0.04\ndt=2^-6\nsamples=50\nseed=7\n";
    }
    const RunResult from_file = run_cli(
        "convergence --config /tmp/wz_test_config.ini --out /tmp/wz_cfg_a.csv");
    CHECK(from_file.exit_code == 0);
    const std::string a = slurp("/tmp/wz_cfg_a.csv");
    CHECK(a.find(",50,heun,cosine,") != std::string::npos);

    const RunResult overridden = run_cli(
        "convergence --config /tmp/wz_test_config.ini --samples 60 --out /tmp/wz_cfg_b.csv");
    CHECK(overridden.exit_code == 0);
    CHECK(slurp("/tmp/wz_cfg_b.csv").find(",60,heun,cosine,") != std::string::npos);
}

TEST_CASE("convergence rate summary appears on stdout when CSV goes to a file") {
    const RunResult res = run_cli(
        "convergence --mode limiting --dt 2^-6..2^-9 --samples 200 --seed 4 --out "
        "/tmp/wz_sum.csv");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("slope=") != std::string::npos);
}
