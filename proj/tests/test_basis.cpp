#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "pdakit/basis.hpp"

using namespace pdakit;

namespace {

LinearDynamics shm_dynamics(const TimeGrid& grid) {
    LinearDynamics dyn;
    dyn.grid = grid;
    dyn.betas.resize(2, grid.points());
    dyn.betas.row(0).setConstant(1.0);
    dyn.betas.row(1).setConstant(0.0);
    return dyn;
}

InitialConditionSpec baseline_ics() {
    return InitialConditionSpec{Eigen::VectorXd::Zero(2), 0.05 * Eigen::MatrixXd::Identity(2, 2)};
}

}  // namespace

TEST_CASE("canonical_basis: harmonic solutions and canonical start values") {
    TimeGrid grid(0.0, 2.0 * M_PI, 200);
    const CanonicalBasis cb = canonical_basis(shm_dynamics(grid), grid);
    REQUIRE(cb.basis.count() == 2);
    for (int k = 0; k < grid.points(); ++k) {
        CHECK(cb.basis.curves(0, k) == doctest::Approx(std::cos(grid[k])).epsilon(1e-6));
        CHECK(cb.basis.curves(1, k) == doctest::Approx(std::sin(grid[k])).epsilon(1e-6));
    }
    // stack[r](k, 0) = 1 exactly when r == k (canonical initial vectors).
    for (int r = 0; r < 2; ++r)
        for (int k = 0; k < 2; ++k)
            CHECK(cb.stack[r](k, 0) == (r == k ? 1.0 : 0.0));
    CHECK(cb.basis.labels[0] == "canonical");
}

TEST_CASE("canonical_basis: first-order zero coefficient gives the constant") {
    TimeGrid grid(0.0, 3.0, 50);
    LinearDynamics dyn;
    dyn.grid = grid;
    dyn.betas = Eigen::MatrixXd::Zero(1, 50);
    const CanonicalBasis cb = canonical_basis(dyn, grid);
    CHECK((cb.basis.curves.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("zero_input_cov: zero covariance, rotation closed form, stationarity") {
    TimeGrid grid(0.0, 2.0 * M_PI, 100);
    const LinearDynamics dyn = shm_dynamics(grid);
    CHECK(zero_input_cov(dyn, Eigen::MatrixXd::Zero(2, 2), grid).surface.cwiseAbs().maxCoeff() ==
          0.0);

    const double c = 0.05;
    const CovarianceGrid cov = zero_input_cov(dyn, c * Eigen::MatrixXd::Identity(2, 2), grid);
    for (int i : {0, 33, 99})
        for (int j : {5, 50, 99})
            CHECK(cov.surface(i, j) ==
                  doctest::Approx(c * std::cos(grid[i] - grid[j])).epsilon(1e-6));

    // Depends on |t_i - t_j| only.
    CHECK(std::abs(cov.surface(10, 30) - cov.surface(40, 60)) < 1e-6);
    CHECK(cov.max_asymmetry() < 1e-15);
}

TEST_CASE("zero_input_cov diagonal matches an unforced ensemble") {
    TimeGrid grid(0.0, 2.0 * M_PI, 60);
    const LinearDynamics dyn = shm_dynamics(grid);
    const int n = 4000;
    const CurveSet curves = simulate_linear(dyn, baseline_ics(), KernelSpec{0.0, 2.0}, n, 321);
    const CovarianceGrid zi = zero_input_cov(dyn, 0.05 * Eigen::MatrixXd::Identity(2, 2), grid);
    for (int k : {0, 20, 59}) {
        const Eigen::VectorXd col = curves.deriv[0].col(k);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / (n - 1);
        const double se = zi.surface(k, k) * std::sqrt(2.0 / (n - 1));
        CHECK(std::abs(var - zi.surface(k, k)) < 3.0 * se);
    }
}

TEST_CASE("zero_state_cov: axes and zero kernel vanish exactly; PSD holds") {
    TimeGrid grid(0.0, 2.0 * M_PI, 60);
    const LinearDynamics dyn = shm_dynamics(grid);
    const CovarianceGrid kernel = kernel_covariance(KernelSpec{0.25, 2.0}, grid);
    const CovarianceGrid zs = zero_state_cov(dyn, kernel, grid);

    for (int k = 0; k < 60; ++k) {
        CHECK(zs.surface(0, k) == 0.0);
        CHECK(zs.surface(k, 0) == 0.0);
    }
    CHECK(zs.max_asymmetry() == 0.0);

    CovarianceGrid none{grid, Eigen::MatrixXd::Zero(60, 60)};
    CHECK(zero_state_cov(dyn, none, grid).surface.cwiseAbs().maxCoeff() == 0.0);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(zs.surface);
    CHECK(eig.eigenvalues().minCoeff() > -1e-8 * eig.eigenvalues().maxCoeff());
}

TEST_CASE("zero_state_cov matches the quadruple-loop reference") {
    TimeGrid grid(0.0, 2.0 * M_PI, 35);
    const LinearDynamics dyn = shm_dynamics(grid);
    const CovarianceGrid kernel = kernel_covariance(KernelSpec{0.25, 2.0}, grid);
    const CovarianceGrid fast = zero_state_cov(dyn, kernel, grid);
    const CovarianceGrid slow = ref::zero_state_cov(dyn, kernel, grid);
    CHECK((fast.surface - slow.surface).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance decomposition matches a forced ensemble at probe pairs") {
    TimeGrid grid(0.0, 2.0 * M_PI, 60);
    const LinearDynamics dyn = shm_dynamics(grid);
    KernelSpec kernel{0.25, 2.0};
    const int n = 4000;
    const CurveSet curves = simulate_linear(dyn, baseline_ics(), kernel, n, 777);

    const CovarianceGrid zi = zero_input_cov(dyn, 0.05 * Eigen::MatrixXd::Identity(2, 2), grid);
    const CovarianceGrid zs = zero_state_cov(dyn, kernel_covariance(kernel, grid), grid);

    Eigen::MatrixXd centered = curves.deriv[0];
    centered.rowwise() -= centered.colwise().mean();
    for (int i : {10, 30, 55}) {
        for (int j : {20, 45, 59}) {
            const double emp = (centered.col(i).dot(centered.col(j))) / (n - 1);
            const double want = zi.surface(i, j) + zs.surface(i, j);
            const double var_i = zi.surface(i, i) + zs.surface(i, i);
            const double var_j = zi.surface(j, j) + zs.surface(j, j);
            const double se = std::sqrt((var_i * var_j + want * want) / (n - 1));
            CHECK(std::abs(emp - want) < 3.0 * se);
        }
    }
}

TEST_CASE("basis_regress: curves in the span fit exactly") {
    TimeGrid grid(0.0, 2.0 * M_PI, 80);
    const CanonicalBasis cb = canonical_basis(shm_dynamics(grid), grid);

    CurveSet curves;
    curves.grid = grid;
    curves.order = 0;
    Eigen::MatrixXd data(5, 80);
    for (int i = 0; i < 5; ++i)
        data.row(i) = (0.3 * i - 0.7) * cb.basis.curves.row(0) + (1.1 - 0.4 * i) * cb.basis.curves.row(1);
    curves.deriv = {data};

    const BasisRegression fit = basis_regress(curves, cb.basis);
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fit.r2_int < 1e-10);
    CHECK(fit.isse < 1e-10);
}

TEST_CASE("basis_regress: richer bases improve the fit on forced data") {
    TimeGrid grid(0.0, 2.0 * M_PI, 100);
    const LinearDynamics dyn = shm_dynamics(grid);
    KernelSpec kernel{0.25, 2.0};
    const CurveSet curves = simulate_linear(dyn, baseline_ics(), kernel, 20, 2718);

    const CanonicalBasis cb = canonical_basis(dyn, grid);
    const CovarianceGrid zs = zero_state_cov(dyn, kernel_covariance(kernel, grid), grid);
    const BasisSet combined = concat(cb.basis, zero_state_eigen_basis(zs, 4));

    const BasisRegression canon = basis_regress(curves, cb.basis);
    const BasisRegression both = basis_regress(curves, combined);
    CHECK(both.r2_int < canon.r2_int);
    CHECK(both.isse <= canon.isse);

    // Least-squares monotonicity holds for any nested pair.
    const BasisSet with_splines = concat(cb.basis, bspline_basis(grid, 4));
    CHECK(basis_regress(curves, with_splines).isse <= canon.isse);
    const BasisSet with_fpc = concat(cb.basis, residual_fpca_basis(canon.residuals, grid, 4));
    CHECK(basis_regress(curves, with_fpc).isse <= canon.isse);
}

TEST_CASE("basis_regress: combined basis aligns the cosine coefficient with x(0)") {
    TimeGrid grid(0.0, 2.0 * M_PI, 100);
    const LinearDynamics dyn = shm_dynamics(grid);
    KernelSpec kernel{0.25, 2.0};
    const CurveSet curves = simulate_linear(dyn, baseline_ics(), kernel, 200, 31415);

    const CanonicalBasis cb = canonical_basis(dyn, grid);
    const CovarianceGrid zs = zero_state_cov(dyn, kernel_covariance(kernel, grid), grid);
    const BasisSet combined = concat(cb.basis, zero_state_eigen_basis(zs, 4));

    auto pearson = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        const double ma = a.mean(), mb = b.mean();
        return ((a.array() - ma) * (b.array() - mb)).sum() /
               std::sqrt((a.array() - ma).square().sum() * (b.array() - mb).square().sum());
    };
    const Eigen::VectorXd x0 = curves.deriv[0].col(0);
    const double r_canon = pearson(basis_regress(curves, cb.basis).coefficients.col(0), x0);
    const double r_both = pearson(basis_regress(curves, combined).coefficients.col(0), x0);
    CHECK(r_both > r_canon);
}

TEST_CASE("bspline_basis: partition of unity") {
    TimeGrid grid(0.0, 2.0 * M_PI, 50);
    const BasisSet splines = bspline_basis(grid, 6);
    const Eigen::VectorXd sums = splines.curves.colwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(splines.labels[0] == "external");
}

TEST_CASE("mean_decomposition: degenerate and closed-form cases") {
    TimeGrid grid(0.0, 2.0 * M_PI, 200);
    LinearDynamics dyn = shm_dynamics(grid);
    dyn.intercept = Eigen::VectorXd::Zero(grid.points());

    // alpha = 0: the intercept part vanishes, the total is the propagated mean.
    Eigen::VectorXd mu0(2);
    mu0 << 1.0, 0.0;
    const MeanDecomposition plain = mean_decomposition(dyn, mu0, grid);
    CHECK(plain.intercept_component.cwiseAbs().maxCoeff() == 0.0);
    for (int k : {0, 50, 150})
        CHECK(plain.total[k] == doctest::Approx(std::cos(grid[k])).epsilon(1e-6));

    const MeanDecomposition zero = mean_decomposition(dyn, Eigen::VectorXd::Zero(2), grid);
    CHECK(zero.total.cwiseAbs().maxCoeff() == 0.0);

    // alpha = 1, mu0 = 0: x-component is Int_0^t sin(t - s) ds = 1 - cos t.
    dyn.intercept = Eigen::VectorXd::Ones(grid.points());
    const MeanDecomposition forced = mean_decomposition(dyn, Eigen::VectorXd::Zero(2), grid);
    for (int k : {10, 80, 199})
        CHECK(forced.total[k] == doctest::Approx(1.0 - std::cos(grid[k])).epsilon(1e-4));

    LinearDynamics no_intercept = shm_dynamics(grid);
    CHECK_THROWS_AS(mean_decomposition(no_intercept, mu0, grid), ArgumentError);
}

TEST_CASE("surface and basis CSV exports are written") {
    TimeGrid grid(0.0, 1.0, 8);
    const CovarianceGrid cov = kernel_covariance(KernelSpec{0.25, 2.0}, grid);
    write_surface_csv(cov, "surface_out.csv");
    const BasisSet splines = bspline_basis(grid, 4);
    write_basis_csv(splines, "basis_out.csv");
    FILE* f1 = std::fopen("surface_out.csv", "r");
    FILE* f2 = std::fopen("basis_out.csv", "r");
    REQUIRE(f1 != nullptr);
    REQUIRE(f2 != nullptr);
    std::fclose(f1);
    std::fclose(f2);
    std::remove("surface_out.csv");
    std::remove("basis_out.csv");
}
