#include <chrono>
#include <cstdio>
#include <string>

#include "pdakit/basis.hpp"
#include "pdakit/parallel.hpp"
#include "pdakit/pda.hpp"
#include "pdakit/reference.hpp"

using namespace pdakit;

namespace {

double time_once(const char* label, const char* variant, const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(t1 - t0).count();
    std::printf("%-24s %-10s %8.3f s\n", label, variant, s);
    return s;
}

void report_speedup(double serial, double parallel) {
    std::printf("%-24s %-10s %8.2fx\n\n", "", "speedup", serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    int d = 200;
    int n = 500;
    if (argc > 1) d = std::atoi(argv[1]);
    if (argc > 2) n = std::atoi(argv[2]);
    std::printf("grid D=%d, curves N=%d, threads=%d\n\n", d, n, num_threads());

    TimeGrid grid(0.0, 2.0 * M_PI, d);
    LinearDynamics dyn;
    dyn.grid = grid;
    dyn.betas.resize(2, d);
    dyn.betas.row(0).setConstant(1.0);
    dyn.betas.row(1).setConstant(0.0);

    InitialConditionSpec ics{Eigen::VectorXd::Zero(2), 0.05 * Eigen::MatrixXd::Identity(2, 2)};
    KernelSpec kernel{0.25, 2.0};
    const CurveSet curves = simulate_linear(dyn, ics, kernel, n, 7);
    const CovarianceGrid cov = kernel_covariance(kernel, grid);
    const TransitionTable table = transition_table(dyn);

    {
        const double s = time_once("pointwise_ols", "serial", [&] {
            (void)ref::pointwise_ols(curves, false, {0});
        });
        const double p = time_once("pointwise_ols", "parallel", [&] {
            (void)pointwise_ols(curves, false, {0});
        });
        report_speedup(s, p);
    }
    {
        const double s = time_once("expected_cross_moment", "serial", [&] {
            (void)ref::expected_cross_moment(table, {&cov}, {1});
        });
        const double p = time_once("expected_cross_moment", "parallel", [&] {
            (void)expected_cross_moment(table, {&cov}, {1});
        });
        report_speedup(s, p);
    }
    {
        // The serial oracle is quartic in D; keep it tractable.
        const int d_small = std::min(d, 120);
        TimeGrid small(0.0, 2.0 * M_PI, d_small);
        LinearDynamics dyn_small;
        dyn_small.grid = small;
        dyn_small.betas.resize(2, d_small);
        dyn_small.betas.row(0).setConstant(1.0);
        dyn_small.betas.row(1).setConstant(0.0);
        const CovarianceGrid cov_small = kernel_covariance(kernel, small);
        const double s = time_once("zero_state_cov", "serial", [&] {
            (void)ref::zero_state_cov(dyn_small, cov_small, small);
        });
        const double p = time_once("zero_state_cov", "parallel", [&] {
            (void)zero_state_cov(dyn_small, cov_small, small);
        });
        report_speedup(s, p);
    }
    return 0;
}
