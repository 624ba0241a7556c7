#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pdakit/genmodel.hpp"
#include "pdakit/pda.hpp"

using namespace pdakit;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PDAKIT_CLI_PATH) + " " + args + " > cli_stdout.txt 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(file), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    TempDir() : path("cli_tmp") {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        fs::remove_all(path);
        fs::remove("cli_stdout.txt");
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli simulate: noiseless curves satisfy the model equation") {
    TempDir tmp;
    const int code = run_cli("--seed 3 simulate --model shm --sigma 0 --n 5 --grid 120 --out " +
                             tmp.file("data.csv"));
    REQUIRE(code == 0);
    const CurveSet curves = read_curves_csv(tmp.file("data.csv"));
    CHECK(curves.n() == 5);
    CHECK(curves.order == 2);
    CHECK((curves.deriv[2] + curves.deriv[0]).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("cli simulate: identical command and seed give byte-identical files") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 11 simulate --model shm --n 4 --grid 60 --out " + tmp.file("a.csv")) ==
            0);
    REQUIRE(run_cli("--seed 11 simulate --model shm --n 4 --grid 60 --out " + tmp.file("b.csv")) ==
            0);
    CHECK(slurp(tmp.file("a.csv")) == slurp(tmp.file("b.csv")));
    REQUIRE(run_cli("--seed 12 simulate --model shm --n 4 --grid 60 --out " + tmp.file("c.csv")) ==
            0);
    CHECK(slurp(tmp.file("a.csv")) != slurp(tmp.file("c.csv")));
}

TEST_CASE("cli simulate: sharper oscillations at larger mu") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 5 simulate --model vdp --mu 0.5 --sigma 0.1 --n 10 --out " +
                    tmp.file("lo.csv")) == 0);
    REQUIRE(run_cli("--seed 5 simulate --model vdp --mu 2 --sigma 0.1 --n 10 --out " +
                    tmp.file("hi.csv")) == 0);
    const CoupledCurveSet lo = read_coupled_csv(tmp.file("lo.csv"));
    const CoupledCurveSet hi = read_coupled_csv(tmp.file("hi.csv"));
    CHECK(hi.dx.cwiseAbs().maxCoeff() > lo.dx.cwiseAbs().maxCoeff());
}

TEST_CASE("cli fit: noiseless dataset recovers the coefficient") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 7 simulate --model shm --sigma 0 --n 30 --grid 100 --out " +
                    tmp.file("data.csv")) == 0);
    REQUIRE(run_cli("fit --data " + tmp.file("data.csv") + " --orders 0 --iterations 0 --out " +
                    tmp.file("fit.json")) == 0);
    const PdaFit fit = read_fit_json(tmp.file("fit.json"));
    CHECK((fit.final_coefficients().array() + 1.0).abs().maxCoeff() < 1e-5);
}

TEST_CASE("cli fit: iteration zero of a long fit equals the zero-iteration fit") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 9 simulate --model shm --n 40 --grid 80 --out " + tmp.file("d.csv")) ==
            0);
    REQUIRE(run_cli("fit --data " + tmp.file("d.csv") + " --orders 0 --iterations 0 --out " +
                    tmp.file("f0.json")) == 0);
    REQUIRE(run_cli("fit --data " + tmp.file("d.csv") + " --orders 0 --iterations 3 --out " +
                    tmp.file("f3.json")) == 0);
    const PdaFit f0 = read_fit_json(tmp.file("f0.json"));
    const PdaFit f3 = read_fit_json(tmp.file("f3.json"));
    REQUIRE(f3.history.size() == 4);
    CHECK((f0.history[0].coefficients - f3.history[0].coefficients).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cli fit: order mismatch is an argument error") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 7 simulate --model shm --sigma 0 --n 5 --grid 40 --out " +
                    tmp.file("data.csv")) == 0);
    CHECK(run_cli("fit --data " + tmp.file("data.csv") + " --order 3 --out " +
                  tmp.file("fit.json")) == 2);
}

TEST_CASE("cli basis: outputs for an shm fit") {
    TempDir tmp;
    REQUIRE(run_cli("--seed 13 simulate --model shm --sigma 0 --n 25 --grid 80 --out " +
                    tmp.file("data.csv")) == 0);
    REQUIRE(run_cli("fit --data " + tmp.file("data.csv") + " --orders 0 --iterations 0 --out " +
                    tmp.file("fit.json")) == 0);
    REQUIRE(run_cli("--out-dir " + tmp.file("basis") + " basis --fit " + tmp.file("fit.json") +
                    " --sigma0 0.05 --mean --mu0 0,0") == 2);  // fit has no intercept
    REQUIRE(run_cli("--out-dir " + tmp.file("basis") + " basis --fit " + tmp.file("fit.json") +
                    " --sigma0 0.05") == 0);
    CHECK(fs::exists(tmp.file("basis") + "/canonical_basis.csv"));
    CHECK(fs::exists(tmp.file("basis") + "/zero_input.csv"));
    CHECK(fs::exists(tmp.file("basis") + "/zero_state.csv"));
    CHECK(fs::exists(tmp.file("basis") + "/zero_state_eigenfunctions.csv"));

    // Basis columns of the harmonic fit are cos and sin; zero-state row at s=0 is 0.
    std::ifstream basis_file(tmp.file("basis") + "/canonical_basis.csv");
    std::string header, first;
    std::getline(basis_file, header);
    std::getline(basis_file, first);
    CHECK(header == "t,b1,b2");
    CHECK(first.substr(0, 2) == "0,");
    // t = 0 row: cos(0) = 1, sin(0) = 0.
    {
        std::stringstream row(first);
        std::string t, b1, b2;
        std::getline(row, t, ',');
        std::getline(row, b1, ',');
        std::getline(row, b2, ',');
        CHECK(std::abs(std::stod(b1) - 1.0) < 1e-9);
        CHECK(std::abs(std::stod(b2)) < 1e-9);
    }
    std::ifstream zs_file(tmp.file("basis") + "/zero_state.csv");
    std::getline(zs_file, header);
    std::getline(zs_file, first);  // first surface row: s = 0, t = 0
    CHECK(first.substr(first.rfind(',') + 1) == "0");
}

TEST_CASE("cli study: list and smoke run") {
    TempDir tmp;
    REQUIRE(run_cli("study --list") == 0);
    const std::string names = slurp("cli_stdout.txt");
    CHECK(names.find("shm-baseline") != std::string::npos);
    CHECK(names.find("vdp-l-3") != std::string::npos);

    REQUIRE(run_cli("--out-dir " + tmp.file("study") +
                    " study --scenario shm-baseline --replicates 2 --size 30 --iterations 1") ==
            0);
    CHECK(fs::exists(tmp.file("study") + "/report.json"));
    const std::string mise_csv = slurp(tmp.file("study") + "/mise.csv");
    // header + one row per iteration (0 and 1)
    CHECK(std::count(mise_csv.begin(), mise_csv.end(), '\n') == 3);

    CHECK(run_cli("study --scenario no-such-thing") == 2);
    CHECK(run_cli("study") == 2);
}

TEST_CASE("cli stm: table dump has the right shape") {
    TempDir tmp;
    REQUIRE(run_cli("stm --betas -1,0 --grid 20 --out " + tmp.file("stm.csv")) == 0);
    const std::string table = slurp(tmp.file("stm.csv"));
    // header + 20*20*2*2 rows
    CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 20 * 20 * 4);
}

TEST_CASE("cli: bad flags and missing subcommand exit with argument errors") {
    CHECK(run_cli("simulate --model bogus --n 3 --out x.csv") == 2);
    CHECK(run_cli("simulate --n 3") == 2);       // missing --model
    CHECK(run_cli("") == 2);                     // missing subcommand
    CHECK(run_cli("fit --data does_not_exist.csv") == 2);
}

TEST_CASE("cli: unwritable output path exits with the I/O code") {
    CHECK(run_cli("--seed 3 simulate --model shm --n 3 --grid 20 --out "
                  "/nonexistent-dir-pdakit/out.csv") == 4);
}
