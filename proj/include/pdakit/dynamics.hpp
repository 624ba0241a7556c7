#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "pdakit/grid.hpp"

namespace pdakit {

// Time-varying linear ODE of order m,
//   D^m x = -beta_0(t) x - ... - beta_{m-1}(t) D^{m-1}x + alpha(t) + forcing,
// with coefficient samples on a grid. The companion matrix has ones on the
// superdiagonal and (-beta_0, ..., -beta_{m-1}) as its last row.
struct LinearDynamics {
    TimeGrid grid;
    Eigen::MatrixXd betas;                  // m x D, row j = beta_j samples
    std::optional<Eigen::VectorXd> intercept;  // alpha samples, length D

    int order() const { return static_cast<int>(betas.rows()); }
    Eigen::MatrixXd companion_at(double t) const;
    double intercept_at(double t) const;  // 0 when absent
    bool time_invariant(double tol = 1e-12) const;
    void validate() const;
};

// General first-order system Dz = A(t) z (+ forcing), A sampled per node and
// linearly interpolated in between. Companion systems convert to this form;
// coupled fits build it directly from their coefficient estimates.
struct MatrixDynamics {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> samples;  // D matrices, each m x m

    int order() const { return samples.empty() ? 0 : static_cast<int>(samples.front().rows()); }
    Eigen::MatrixXd at(double t) const;
};

MatrixDynamics to_matrix_dynamics(const LinearDynamics& dyn);

// Classical fixed-step RK4 over the grid; `substeps` steps per grid cell.
// trajectory.row(0) == ic exactly; throws DivergenceError on non-finite state.
Eigen::MatrixXd solve_ivp(
    const std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>& rhs,
    const Eigen::VectorXd& ic, const TimeGrid& grid, int substeps = 10);

// Propagator of the homogeneous system from time s to time t (either order),
// solved column-by-column from canonical initial vectors.
Eigen::MatrixXd transition_matrix(const MatrixDynamics& dyn, double s, double t, int substeps = 10);
Eigen::MatrixXd transition_matrix(const LinearDynamics& dyn, double s, double t, int substeps = 10);

// All-pairs table of propagators Phi(t_i, t_j) over the grid.
class TransitionTable {
  public:
    TransitionTable() = default;
    TransitionTable(TimeGrid grid, int order);

    const TimeGrid& grid() const { return grid_; }
    int order() const { return order_; }

    Eigen::MatrixXd& entry(int i, int j) { return entries_[idx(i, j)]; }
    const Eigen::MatrixXd& entry(int i, int j) const { return entries_[idx(i, j)]; }

    // Bilinear interpolation of each matrix entry over the (t, s) node grid.
    Eigen::MatrixXd at(double t, double s) const;
    // Fast path for t fixed at node i: linear interpolation along the row.
    Eigen::MatrixXd at_row(int i, double s) const;

  private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(grid_.points()) +
               static_cast<std::size_t>(j);
    }
    TimeGrid grid_;
    int order_ = 0;
    std::vector<Eigen::MatrixXd> entries_;
};

struct TransitionTableOptions {
    // Fast path: one forward solve for Phi(t_i, t_0), then
    // Phi(t_i, t_j) = Phi(t_i, t_0) * Phi(t_j, t_0)^-1, guarded by a condition
    // check. `direct` forces per-start-time solving instead.
    bool direct = false;
    double condition_limit = 1e12;
    int substeps = 10;
};

TransitionTable transition_table(const MatrixDynamics& dyn, TransitionTableOptions opts = {});
TransitionTable transition_table(const LinearDynamics& dyn, TransitionTableOptions opts = {});

// exp(dt * B) by scaling-and-squaring of the truncated power series, terms
// added until below 1e-14 in max-abs.
Eigen::MatrixXd matexp(const Eigen::MatrixXd& b, double dt);

}  // namespace pdakit
