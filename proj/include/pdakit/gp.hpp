#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "pdakit/grid.hpp"

namespace pdakit {

// Stationary disturbance kernel C(s, t) = sigma^2 * phi(l * |t - s|) with phi
// the standard normal density, so C(t, t) = sigma^2 / sqrt(2*pi).
struct KernelSpec {
    double sigma = 0.25;
    double lengthscale = 2.0;

    void validate() const;
};

double kernel_eval(const KernelSpec& spec, double s, double t);

// Discretised bivariate covariance on grid x grid.
struct CovarianceGrid {
    TimeGrid grid;
    Eigen::MatrixXd surface;

    double max_asymmetry() const;
    void symmetrize();  // average with transpose
};

CovarianceGrid kernel_covariance(const KernelSpec& spec, const TimeGrid& grid);

class Rng;

// Cholesky factor of the gridded kernel, built once and reused across draws.
// Jitter starts at 1e-10 * C(t,t) and escalates x10 at most 5 times before a
// NumericalError.
class GpSampler {
  public:
    GpSampler(const KernelSpec& spec, const TimeGrid& grid);
    Eigen::VectorXd draw(Rng& rng) const;
    bool is_zero() const { return zero_; }

  private:
    Eigen::MatrixXd chol_;
    int points_ = 0;
    bool zero_ = false;
};

// Mean-zero draws with the given kernel; deterministic given the seed.
// Returns n x D (row per curve).
Eigen::MatrixXd sample_gp(const KernelSpec& spec, const TimeGrid& grid, int n, std::uint64_t seed);

// surface[i][j] = sum_k r_k(t_i) r_k(t_j) / (N - 1); residuals are N x D and
// assumed mean-centred by construction (no centring applied).
CovarianceGrid empirical_cov(const Eigen::MatrixXd& residuals, const TimeGrid& grid);

struct EigenPairs {
    Eigen::VectorXd values;     // non-increasing
    Eigen::MatrixXd functions;  // k x D, unit L2 norm under grid quadrature
};

// Leading eigenpairs of the covariance operator, via the trapezoid-weighted
// symmetric eigenproblem W^{1/2} K W^{1/2}. Sign fixed so each curve's
// largest-magnitude value is positive.
EigenPairs eigenfunctions(const CovarianceGrid& cov, int k);

// Keeps the leading eigenpairs explaining `fraction` of total variance and
// rebuilds the surface from them.
CovarianceGrid truncate_covariance(const CovarianceGrid& cov, double fraction = 0.99);

}  // namespace pdakit
