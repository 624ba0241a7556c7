#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pdakit/parallel.hpp"
#include "pdakit/rng.hpp"
#include "pdakit/pda.hpp"
#include "pdakit/studies.hpp"

using namespace pdakit;

TEST_CASE("mise: exact, constant-offset and guard cases") {
    TimeGrid grid(0.0, 2.0 * M_PI, 100);
    Eigen::VectorXd truth(100);
    for (int i = 0; i < 100; ++i) truth[i] = std::sin(grid[i]);

    std::vector<Eigen::VectorXd> exact{truth, truth, truth};
    const auto [m0, s0] = mise(exact, truth, grid);
    CHECK(m0 == 0.0);
    CHECK(s0 == 0.0);

    std::vector<Eigen::VectorXd> offset;
    for (int r = 0; r < 4; ++r) offset.push_back(truth.array() + 0.1);
    const auto [m1, s1] = mise(offset, truth, grid);
    CHECK(m1 == doctest::Approx(0.02 * M_PI).epsilon(1e-10));
    CHECK(s1 == 0.0);

    std::vector<Eigen::VectorXd> single{truth};
    CHECK_THROWS_AS(mise(single, truth, grid), ArgumentError);
}

TEST_CASE("bias_curve: symmetric estimates cancel; bands shrink like 1/sqrt(R)") {
    TimeGrid grid(0.0, 1.0, 20);
    Eigen::VectorXd truth = Eigen::VectorXd::Zero(20);
    std::vector<Eigen::VectorXd> pm;
    Eigen::VectorXd delta = Eigen::VectorXd::Constant(20, 0.3);
    pm.push_back(delta);
    pm.push_back(-delta);
    pm.push_back(delta);
    pm.push_back(-delta);
    const BiasCurve symmetric = bias_curve(pm, truth);
    CHECK(symmetric.mean_bias.cwiseAbs().maxCoeff() < 1e-15);
    CHECK((symmetric.hi - symmetric.mean_bias).minCoeff() > 0.0);

    auto band_width = [&](int r, std::uint64_t seed) {
        Rng rng(seed);
        std::vector<Eigen::VectorXd> estimates;
        for (int i = 0; i < r; ++i) {
            Eigen::VectorXd e(20);
            for (int k = 0; k < 20; ++k) e[k] = rng.normal();
            estimates.push_back(std::move(e));
        }
        const BiasCurve b = bias_curve(estimates, truth);
        return (b.hi - b.lo).mean();
    };
    const double ratio = band_width(60, 9) / band_width(240, 10);
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
}

TEST_CASE("catalog: the named scenarios with their truths") {
    const auto specs = catalog();
    const std::vector<std::string> expected{
        "shm-baseline",      "shm-ic-a",      "shm-ic-b",      "shm-lengthscale-a",
        "shm-lengthscale-b", "shm-amplitude-a", "shm-amplitude-b", "shm-full",
        "dhm",               "dhm-tv",        "vdp-mu-0.5",    "vdp-mu-1",
        "vdp-mu-2",          "vdp-sigma-0.2", "vdp-sigma-0.4", "vdp-l-1",
        "vdp-l-3"};
    REQUIRE(specs.size() == expected.size());
    for (std::size_t i = 0; i < specs.size(); ++i) CHECK(specs[i].name == expected[i]);
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j) CHECK(specs[i].name != specs[j].name);

    const ScenarioSpec base = find_scenario("shm-baseline");
    const TimeGrid grid = base.make_grid();
    const auto truths = scenario_truth(base, grid);
    REQUIRE(truths.size() == 1);
    CHECK(truths[0].first == "beta0");
    CHECK((truths[0].second.array() + 1.0).abs().maxCoeff() == 0.0);

    const ScenarioSpec vdp2 = find_scenario("vdp-mu-2");
    const auto vdp_truths = scenario_truth(vdp2, vdp2.make_grid());
    REQUIRE(vdp_truths.size() == 6);
    CHECK(vdp_truths[2].first == "beta_xy");
    CHECK((vdp_truths[2].second.array() + 2.0).abs().maxCoeff() == 0.0);
    CHECK(vdp_truths[4].first == "beta_yx");
    CHECK((vdp_truths[4].second.array() - 0.5).abs().maxCoeff() == 0.0);
    // beta_xx = mu (1 - x0^2) never exceeds mu.
    CHECK(vdp_truths[1].second.maxCoeff() <= 2.0 + 1e-12);

    CHECK_THROWS_AS(find_scenario("nope"), ArgumentError);
}

TEST_CASE("limit_cycle_reference: start point and amplitude") {
    TimeGrid grid(0.0, 13.0, 200);
    const auto [x0, y0] = limit_cycle_reference(1.0, grid);
    CHECK(x0[0] == 1.99);
    CHECK(y0[0] == -0.91);
    const double amp = x0.cwiseAbs().maxCoeff();
    CHECK(amp > 1.9);
    CHECK(amp < 2.1);
}

namespace {

ScenarioSpec smoke_spec() {
    ScenarioSpec spec = find_scenario("shm-baseline");
    spec.replicates = 2;
    spec.n_per_dataset = 40;
    spec.grid_points = 60;
    spec.iterations = 1;
    return spec;
}

}  // namespace

TEST_CASE("run_scenario: smoke run produces finite metrics") {
    const StudyReport report = run_scenario(smoke_spec());
    CHECK(report.failures == 0);
    REQUIRE(report.coefficients.size() == 1);
    REQUIRE(report.coefficients[0].mise.size() == 2);
    for (double m : report.coefficients[0].mise) {
        CHECK(std::isfinite(m));
        CHECK(m >= 0.0);
    }
    for (double s : report.coefficients[0].se) CHECK(s >= 0.0);
    for (const auto& b : report.coefficients[0].bias) {
        CHECK((b.hi - b.mean_bias).minCoeff() >= 0.0);
        CHECK((b.mean_bias - b.lo).minCoeff() >= 0.0);
    }
}

TEST_CASE("run_scenario: bit-identical across repeat runs and thread counts") {
    const StudyReport a = run_scenario(smoke_spec());
    set_num_threads(1);
    const StudyReport b = run_scenario(smoke_spec());
    set_num_threads(3);
    const StudyReport c = run_scenario(smoke_spec());
    set_num_threads(0);
    for (std::size_t it = 0; it < a.coefficients[0].mise.size(); ++it) {
        CHECK(a.coefficients[0].mise[it] == b.coefficients[0].mise[it]);
        CHECK(a.coefficients[0].mise[it] == c.coefficients[0].mise[it]);
        CHECK(a.coefficients[0].se[it] == b.coefficients[0].se[it]);
    }
    CHECK((a.coefficients[0].bias[1].mean_bias - c.coefficients[0].bias[1].mean_bias)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("run_scenario: report files are written") {
    const StudyReport report = run_scenario(smoke_spec());
    const std::string dir = "study_out_tmp";
    write_report(report, dir);
    namespace fs = std::filesystem;
    CHECK(fs::exists(fs::path(dir) / "report.json"));
    CHECK(fs::exists(fs::path(dir) / "mise.csv"));
    CHECK(fs::exists(fs::path(dir) / "bias.csv"));
    fs::remove_all(dir);
}

TEST_CASE("linearised oscillator model: truth curves regenerate themselves") {
    // Simulate from the time-varying linear approximation built out of the
    // catalog truth curves; an unforced fit must hand the same curves back.
    const ScenarioSpec spec = find_scenario("vdp-mu-1");
    TimeGrid grid(0.0, 13.0, 120);
    const auto truths = scenario_truth(spec, grid);
    REQUIRE(truths.size() == 6);

    MatrixDynamics dyn;
    dyn.grid = grid;
    dyn.samples.resize(static_cast<std::size_t>(grid.points()));
    Eigen::MatrixXd alpha(2, grid.points());
    for (int k = 0; k < grid.points(); ++k) {
        Eigen::MatrixXd a(2, 2);
        a << truths[1].second[k], truths[2].second[k],  // beta_xx, beta_xy
            truths[4].second[k], truths[5].second[k];   // beta_yx, beta_yy
        dyn.samples[static_cast<std::size_t>(k)] = a;
        alpha(0, k) = truths[0].second[k];
        alpha(1, k) = truths[3].second[k];
    }
    InitialConditionSpec ics{spec.mu0, 0.01 * Eigen::MatrixXd::Identity(2, 2)};
    const CoupledCurveSet curves =
        simulate_coupled_linear(dyn, alpha, ics, KernelSpec{0.0, 2.0}, 10, 77);

    const MlsResult fit = pointwise_mls(curves, true);
    // With no forcing, the attracting cycle collapses the initial-condition
    // spread onto one direction as t grows and the design degenerates, so the
    // coefficients are only identifiable over the early part of the window.
    for (int k = 0; k < 70; ++k) {
        CHECK(fit.coefficients[0](0, k) == doctest::Approx(truths[0].second[k]).epsilon(1e-4));
        CHECK(fit.coefficients[0](1, k) == doctest::Approx(truths[1].second[k]).epsilon(1e-4));
        CHECK(fit.coefficients[0](2, k) == doctest::Approx(truths[2].second[k]).epsilon(1e-4));
        CHECK(fit.coefficients[1](1, k) == doctest::Approx(truths[4].second[k]).epsilon(1e-4));
    }
}

TEST_CASE("run_scenario: correction lowers the error across the single-coefficient family") {
    for (const char* name : {"shm-baseline", "shm-ic-a", "shm-ic-b", "shm-lengthscale-a",
                             "shm-lengthscale-b", "shm-amplitude-a", "shm-amplitude-b"}) {
        ScenarioSpec spec = find_scenario(name);
        spec.replicates = 12;  // catalog-size datasets, fewer repetitions
        const StudyReport report = run_scenario(spec);
        const auto& mise = report.coefficients[0].mise;
        REQUIRE(mise.size() == 4);
        CHECK(mise[3] <= mise[0]);
    }
}

TEST_CASE("run_scenario: a scenario whose replicates all fail raises a study error") {
    ScenarioSpec spec = find_scenario("vdp-mu-1");
    spec.replicates = 3;
    spec.n_per_dataset = 4;  // too few replicates for the coupled design
    spec.grid_points = 40;
    spec.iterations = 1;
    CHECK_THROWS_AS(run_scenario(spec), NumericalError);
}

TEST_CASE("scenario JSON round trip") {
    ScenarioSpec spec = find_scenario("dhm-tv");
    const std::string path = "scenario_tmp.json";
    write_scenario_json(spec, path);
    const ScenarioSpec back = read_scenario_json(path);
    CHECK(back.name == spec.name);
    CHECK(back.model == spec.model);
    CHECK(back.beta_true[1].kind == CoefficientSpec::Kind::quadratic);
    CHECK(back.beta_true[1].value == spec.beta_true[1].value);
    CHECK(back.beta_true[1].center == spec.beta_true[1].center);
    CHECK(back.n_per_dataset == spec.n_per_dataset);
    CHECK(back.base_seed == spec.base_seed);
    CHECK((back.mu0 - spec.mu0).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}
