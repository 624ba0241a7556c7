#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "pdakit/dynamics.hpp"
#include "pdakit/gp.hpp"

namespace pdakit {

struct InitialConditionSpec {
    Eigen::VectorXd mean;        // mu_0
    Eigen::MatrixXd covariance;  // Sigma_0, symmetric PSD

    void validate() const;
};

// N replicate curves with their derivative stack on a shared grid.
// deriv[j] is the N x D matrix of j-th derivative samples, j = 0..order.
struct CurveSet {
    TimeGrid grid;
    int order = 0;
    std::vector<Eigen::MatrixXd> deriv;
    Eigen::MatrixXd disturbances;  // N x D, empty when not stored

    int n() const { return deriv.empty() ? 0 : static_cast<int>(deriv.front().rows()); }
    bool has_disturbances() const { return disturbances.size() > 0; }
};

// Two coupled states with first derivatives and per-state disturbances.
struct CoupledCurveSet {
    TimeGrid grid;
    Eigen::MatrixXd x, y, dx, dy;      // each N x D
    Eigen::MatrixXd eps_x, eps_y;      // each N x D, empty when not stored

    int n() const { return static_cast<int>(x.rows()); }
    bool has_disturbances() const { return eps_x.size() > 0 && eps_y.size() > 0; }
};

struct VdpSpec {
    double mu = 1.0;
    KernelSpec kernel;
    InitialConditionSpec ics;  // 2-dimensional
    TimeGrid grid;

    void validate() const;
};

// Solutions of D^m x = -sum_j beta_j(t) D^j x + alpha(t) + eps_i(t) with random
// initial conditions and GP disturbances. The order-m derivative is filled from
// the model equation at the nodes (exact by construction); replicate r uses
// seed + r with separate sub-streams for ICs and disturbances.
CurveSet simulate_linear(const LinearDynamics& dyn, const InitialConditionSpec& ics,
                         const KernelSpec& kernel, int n, std::uint64_t seed, int substeps = 10);

// Stochastically forced Van der Pol system
//   Dx = mu (x - x^3/3 - y) + eps_x,   Dy = x / mu + eps_y,
// with a runaway guard at |x| > 10.
CoupledCurveSet simulate_vdp(const VdpSpec& spec, int n, std::uint64_t seed, int substeps = 10);

// Forced time-varying first-order pair Dz = alpha(t) + A(t) z + eps(t) with
// independent per-state disturbances; used to generate data from a linearised
// model (and as the sigma = 0 exact-fit case for coupled regression).
CoupledCurveSet simulate_coupled_linear(const MatrixDynamics& dyn, const Eigen::MatrixXd& alpha,
                                        const InitialConditionSpec& ics, const KernelSpec& kernel,
                                        int n, std::uint64_t seed, int substeps = 10);

// Max abs discrepancy between stored curves and their propagator-plus-
// convolution representation rebuilt from the stored disturbances.
double verify_forced_solution(const LinearDynamics& dyn, const CurveSet& curves,
                              TransitionTableOptions opts = {});

// Long-form CSV: replicate,t,d0,...,dm[,eps], 17 significant digits.
void write_curves_csv(const CurveSet& curves, const std::string& path);
CurveSet read_curves_csv(const std::string& path);

// Coupled form: replicate,t,x,y,dx,dy[,eps_x,eps_y].
void write_coupled_csv(const CoupledCurveSet& curves, const std::string& path);
CoupledCurveSet read_coupled_csv(const std::string& path);

}  // namespace pdakit
