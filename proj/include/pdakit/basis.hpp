#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pdakit/dynamics.hpp"
#include "pdakit/genmodel.hpp"
#include "pdakit/gp.hpp"

namespace pdakit {

// Basis-function samples, one row per function, with a provenance tag per row
// (canonical | zero-state-eigen | external).
struct BasisSet {
    TimeGrid grid;
    Eigen::MatrixXd curves;  // K x D
    std::vector<std::string> labels;

    int count() const { return static_cast<int>(curves.rows()); }
};

BasisSet concat(const BasisSet& a, const BasisSet& b);

// The order-m fundamental solutions read from the propagator columns:
// basis row k = first row entries of Phi(t, 0) column k, stack[r] holds the
// r-th derivative rows of the same columns.
struct CanonicalBasis {
    BasisSet basis;
    std::vector<Eigen::MatrixXd> stack;  // m matrices, each m x D
};

CanonicalBasis canonical_basis(const LinearDynamics& dyn, const TimeGrid& grid, int substeps = 10);

// Covariance induced by random initial conditions:
// surface[i][j] = [Phi(t_i,0) Sigma0 Phi(t_j,0)^T] at the selected state.
CovarianceGrid zero_input_cov(const LinearDynamics& dyn, const Eigen::MatrixXd& sigma0,
                              const TimeGrid& grid, int state = 0, int substeps = 10);

// Covariance induced by the disturbance: the double integral of
// Phi(s,u) C(u,v) Phi(t,v)^T over [0,s] x [0,t] at the selected state,
// by composite quadrature on the native grid. Symmetric by construction.
CovarianceGrid zero_state_cov(const LinearDynamics& dyn, const CovarianceGrid& cov,
                              const TimeGrid& grid, int state = 0,
                              TransitionTableOptions opts = {});

// Wraps leading eigenfunctions of a covariance surface as basis rows.
BasisSet zero_state_eigen_basis(const CovarianceGrid& cov, int k);

// External comparison bases: clamped cubic B-splines with uniform knots, and
// leading principal components of first-stage residuals.
BasisSet bspline_basis(const TimeGrid& grid, int count);
BasisSet residual_fpca_basis(const Eigen::MatrixXd& residuals, const TimeGrid& grid, int k);

struct BasisRegression {
    Eigen::MatrixXd coefficients;  // N x K
    Eigen::MatrixXd residuals;     // N x D
    // Integrated residual fraction (1/T) Int R2(t) dt with
    // R2(t) = sum_i (x_i - xhat_i)^2 / sum_i x_i^2. Note this is the residual
    // fraction, not 1 minus it: 0 means a perfect fit.
    double r2_int = 0.0;
    double isse = 0.0;  // quadrature-weighted integrated squared residuals
    double gram_condition = 0.0;
};

// Least squares of each observed curve on the basis rows under the grid
// quadrature weights (so `isse` is exactly the minimised criterion).
BasisRegression basis_regress(const CurveSet& curves, const BasisSet& basis);

struct MeanDecomposition {
    Eigen::VectorXd ic_component;         // Phi(t,0) mu0, selected state
    Eigen::VectorXd intercept_component;  // Int Phi(t,s) (0,..,alpha(s)) ds, selected state
    Eigen::VectorXd total;
};

// Requires dyn.intercept to be present (it may be all zero).
MeanDecomposition mean_decomposition(const LinearDynamics& dyn, const Eigen::VectorXd& mu0,
                                     const TimeGrid& grid, int state = 0, int refine = 4,
                                     TransitionTableOptions opts = {});

// CSV forms: surfaces as long-form s,t,value; bases as t,b1..bK.
void write_surface_csv(const CovarianceGrid& cov, const std::string& path);
void write_basis_csv(const BasisSet& basis, const std::string& path);
void write_curve_csv(const TimeGrid& grid, const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                     const std::string& path);

namespace ref {
// Straightforward serial implementation (explicit quadruple loop) kept as the
// oracle for the tiled kernel above.
CovarianceGrid zero_state_cov(const LinearDynamics& dyn, const CovarianceGrid& cov,
                              const TimeGrid& grid, int state = 0,
                              TransitionTableOptions opts = {});
}  // namespace ref

}  // namespace pdakit
