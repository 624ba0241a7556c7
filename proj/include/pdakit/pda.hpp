#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "pdakit/genmodel.hpp"

namespace pdakit {

struct PdaConfig {
    bool include_intercept = false;
    int iterations = 0;                // J; guarded at <= 100
    std::vector<int> included_orders;  // derivative orders in the design; empty = all 0..m-1
    double post_smooth_lambda = 0.0;   // > 0 smooths the residual covariance each iteration
    bool truncate_covariance = false;  // keep eigenpairs explaining 99% of variance
    bool table_speedup = true;         // propagator table via inverse products
    bool early_stop = false;           // optional relative-change stop
    double early_stop_tol = 1e-4;
    int quad_refine = 4;
    int substeps = 10;

    void validate(int order) const;
    std::vector<int> orders_for(int order) const;
};

struct PdaIteration {
    Eigen::MatrixXd coefficients;  // p x D, rows ordered [intercept?], included orders
    Eigen::MatrixXd bias;          // p x D, zero at iteration 0
    CovarianceGrid residual_cov;   // covariance of residuals under these coefficients
};

struct PdaFit {
    TimeGrid grid;
    int order = 0;
    bool include_intercept = false;
    std::vector<int> included_orders;
    std::vector<std::string> labels;      // one per coefficient row
    std::vector<PdaIteration> history;    // J+1 entries; index 0 is the initial OLS
    Eigen::MatrixXd residuals;            // N x D under the final coefficients
    std::vector<double> ridge_times;      // grid times where the Gram needed ridging
    int early_stop_iteration = -1;        // -1 when the full J iterations ran
    bool failed = false;
    std::string failure_message;

    const Eigen::MatrixXd& final_coefficients() const { return history.back().coefficients; }
};

struct CoupledPdaFit {
    PdaFit x;  // labels alpha_x, beta_xx, beta_xy
    PdaFit y;  // labels alpha_y, beta_yx, beta_yy
};

struct OlsResult {
    Eigen::MatrixXd coefficients;  // p x D
    Eigen::MatrixXd residuals;     // N x D
    std::vector<double> ridge_times;
};

// Least squares of D^m x on [1,] {D^o x : o included} at each grid node.
// Regression convention: D^m x = [alpha +] sum_o b_o D^o x + eps, so the
// estimand for D^2 x = -x is the constant -1. Near-singular cross-sections
// (condition > 1e12) get a ridge of 1e-10 * trace(Gram)/p and are reported.
OlsResult pointwise_ols(const CurveSet& curves, bool include_intercept,
                        const std::vector<int>& included_orders = {});

struct MlsResult {
    std::array<Eigen::MatrixXd, 2> coefficients;  // per response, p x D
    std::array<Eigen::MatrixXd, 2> residuals;     // per response, N x D
    std::vector<double> ridge_times;
};

// Two-response least squares sharing the design [1,] x, y per grid node;
// responses are Dx and Dy.
MlsResult pointwise_mls(const CoupledCurveSet& curves, bool include_intercept = true);

// Per-node cross moments E[state(t) disturbance(t)^T]: out[i] is m x m whose
// column channels[c] equals the integral over [0, t_i] of
// Phi(t_i, s).col(channels[c]) * C_c(s, t_i).
std::vector<Eigen::MatrixXd> expected_cross_moment(const TransitionTable& table,
                                                   const std::vector<const CovarianceGrid*>& covs,
                                                   const std::vector<int>& channels,
                                                   int refine = 4);

// Single-disturbance form: the forcing enters the last state equation.
std::vector<Eigen::MatrixXd> expected_cross_moment(const LinearDynamics& dyn,
                                                   const CovarianceGrid& cov, const TimeGrid& grid,
                                                   int refine = 4,
                                                   TransitionTableOptions opts = {});

// Iterative bias reduction: initial pointwise OLS, then per iteration the
// residual covariance, propagator table and cross-moment integrals rebuilt
// from the current estimate, and the bias subtracted from the *initial* OLS
// estimate. Aborts with a partial history and failed flag if a transition
// solve diverges.
PdaFit bias_reduce(const CurveSet& curves, const PdaConfig& config);

// Coupled variant: joint 2-dim propagator from the current coefficient
// estimates of both equations, diagonal disturbance covariance from the
// per-equation residuals, full 2x2 cross-moment integrals.
CoupledPdaFit bias_reduce_coupled(const CoupledCurveSet& curves, const PdaConfig& config);

// Discrete second-difference penalised least squares:
// argmin sum (yhat - y)^2 + lambda * sum (second difference of yhat)^2.
Eigen::VectorXd post_smooth(const Eigen::VectorXd& samples, double lambda);

// Fit persistence (JSON). Residual covariance surfaces are included only when
// `include_covariance` is set; they dominate the file size.
void write_fit_json(const PdaFit& fit, const std::string& path, bool include_covariance = false);
void write_fit_json(const CoupledPdaFit& fit, const std::string& path,
                    bool include_covariance = false);
PdaFit read_fit_json(const std::string& path);

}  // namespace pdakit
