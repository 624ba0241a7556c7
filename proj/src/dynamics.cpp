#include "pdakit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdakit {

void LinearDynamics::validate() const {
    if (betas.rows() < 1) throw ArgumentError("LinearDynamics: order must be >= 1");
    if (betas.cols() != grid.points())
        throw ArgumentError("LinearDynamics: coefficient samples must match grid length");
    if (intercept && intercept->size() != grid.points())
        throw ArgumentError("LinearDynamics: intercept samples must match grid length");
}

Eigen::MatrixXd LinearDynamics::companion_at(double t) const {
    const int m = order();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
    for (int r = 0; r + 1 < m; ++r) b(r, r + 1) = 1.0;
    for (int j = 0; j < m; ++j) b(m - 1, j) = -interp1(grid, betas.row(j), t);
    return b;
}

double LinearDynamics::intercept_at(double t) const {
    if (!intercept) return 0.0;
    return interp1(grid, *intercept, t);
}

bool LinearDynamics::time_invariant(double tol) const {
    for (int j = 0; j < betas.rows(); ++j) {
        const double v = betas(j, 0);
        if ((betas.row(j).array() - v).abs().maxCoeff() > tol) return false;
    }
    if (intercept) {
        const double v = (*intercept)[0];
        if ((intercept->array() - v).abs().maxCoeff() > tol) return false;
    }
    return true;
}

Eigen::MatrixXd MatrixDynamics::at(double t) const {
    grid.require_contains(t, "MatrixDynamics::at");
    const int k = grid.cell_index(t);
    const double t0 = grid[k], t1 = grid[k + 1];
    if (t == t0) return samples[static_cast<std::size_t>(k)];
    if (t == t1) return samples[static_cast<std::size_t>(k + 1)];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * samples[static_cast<std::size_t>(k)] +
           w * samples[static_cast<std::size_t>(k + 1)];
}

MatrixDynamics to_matrix_dynamics(const LinearDynamics& dyn) {
    dyn.validate();
    const int m = dyn.order();
    const int d = dyn.grid.points();
    MatrixDynamics out;
    out.grid = dyn.grid;
    out.samples.reserve(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
        for (int r = 0; r + 1 < m; ++r) b(r, r + 1) = 1.0;
        for (int j = 0; j < m; ++j) b(m - 1, j) = -dyn.betas(j, i);
        out.samples.push_back(std::move(b));
    }
    return out;
}

Eigen::MatrixXd solve_ivp(
    const std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>& rhs,
    const Eigen::VectorXd& ic, const TimeGrid& grid, int substeps) {
    if (substeps < 1) throw ArgumentError("solve_ivp: substeps must be >= 1");
    const int d = grid.points();
    const auto dim = ic.size();
    Eigen::MatrixXd traj(d, dim);
    traj.row(0) = ic;

    // Stage times are clamped to the grid range; the final stage of a cell can
    // overshoot the node by one ulp otherwise.
    const auto clamp_t = [&grid](double t) { return std::clamp(t, grid.start(), grid.end()); };
    Eigen::VectorXd y = ic, k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    for (int cell = 0; cell + 1 < d; ++cell) {
        const double h = (grid[cell + 1] - grid[cell]) / substeps;
        for (int s = 0; s < substeps; ++s) {
            const double t = grid[cell] + h * s;
            rhs(t, y, k1);
            tmp = y + (h / 2) * k1;
            rhs(clamp_t(t + h / 2), tmp, k2);
            tmp = y + (h / 2) * k2;
            rhs(clamp_t(t + h / 2), tmp, k3);
            tmp = y + h * k3;
            rhs(clamp_t(t + h), tmp, k4);
            y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        if (!y.allFinite()) throw DivergenceError(grid[cell + 1]);
        traj.row(cell + 1) = y;
    }
    return traj;
}

namespace {

// Smallest node index with grid[i] > s (may be points()).
int next_above(const TimeGrid& g, double s) {
    int i = g.cell_index(s);
    while (i < g.points() && g[i] <= s) ++i;
    return i;
}

// Largest node index with grid[i] < s (may be -1).
int next_below(const TimeGrid& g, double s) {
    int i = g.cell_index(s) + 1;
    while (i >= 0 && g[i] >= s) --i;
    return i;
}

// RK4 on the matrix equation D Phi = A(u) Phi from u = s to u = t, marching
// node to node so recorded values land exactly on grid nodes.
Eigen::MatrixXd propagate(const MatrixDynamics& dyn, double s, double t, int substeps,
                          const std::function<void(int, const Eigen::MatrixXd&)>* record) {
    const int m = dyn.order();
    Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(m, m);
    if (s == t) return phi;
    dyn.grid.require_contains(s, "transition_matrix");
    dyn.grid.require_contains(t, "transition_matrix");

    const bool forward = t > s;
    int node = forward ? next_above(dyn.grid, s) : next_below(dyn.grid, s);
    double u = s;
    Eigen::MatrixXd k1(m, m), k2(m, m), k3(m, m), k4(m, m);
    while (u != t) {
        double target;
        int reached = -1;
        if (forward) {
            if (node < dyn.grid.points() && dyn.grid[node] <= t) {
                target = dyn.grid[node];
                reached = node++;
            } else {
                target = t;
            }
        } else {
            if (node >= 0 && dyn.grid[node] >= t) {
                target = dyn.grid[node];
                reached = node--;
            } else {
                target = t;
            }
        }
        const double h = (target - u) / substeps;
        const auto clamp_t = [&](double x) { return std::clamp(x, dyn.grid.start(), dyn.grid.end()); };
        for (int k = 0; k < substeps; ++k) {
            const double tk = u + h * k;
            k1 = dyn.at(tk) * phi;
            k2 = dyn.at(clamp_t(tk + h / 2)) * (phi + (h / 2) * k1);
            k3 = dyn.at(clamp_t(tk + h / 2)) * (phi + (h / 2) * k2);
            k4 = dyn.at(clamp_t(tk + h)) * (phi + h * k3);
            phi += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        if (!phi.allFinite()) throw DivergenceError(target, "transition solve diverged");
        u = target;
        if (record && reached >= 0) (*record)(reached, phi);
    }
    return phi;
}

double condition_2x2ish(const Eigen::MatrixXd& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const double smin = svd.singularValues().minCoeff();
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return svd.singularValues().maxCoeff() / smin;
}

}  // namespace

Eigen::MatrixXd transition_matrix(const MatrixDynamics& dyn, double s, double t, int substeps) {
    return propagate(dyn, s, t, substeps, nullptr);
}

Eigen::MatrixXd transition_matrix(const LinearDynamics& dyn, double s, double t, int substeps) {
    return transition_matrix(to_matrix_dynamics(dyn), s, t, substeps);
}

TransitionTable::TransitionTable(TimeGrid grid, int order) : grid_(std::move(grid)), order_(order) {
    entries_.assign(static_cast<std::size_t>(grid_.points()) * grid_.points(),
                    Eigen::MatrixXd::Identity(order_, order_));
}

Eigen::MatrixXd TransitionTable::at(double t, double s) const {
    grid_.require_contains(t, "TransitionTable::at");
    grid_.require_contains(s, "TransitionTable::at");
    const int i = grid_.cell_index(t);
    if (t == grid_[i]) return at_row(i, s);
    if (t == grid_[i + 1]) return at_row(i + 1, s);
    const double wt = (t - grid_[i]) / (grid_[i + 1] - grid_[i]);
    return (1.0 - wt) * at_row(i, s) + wt * at_row(i + 1, s);
}

Eigen::MatrixXd TransitionTable::at_row(int i, double s) const {
    grid_.require_contains(s, "TransitionTable::at_row");
    const int j = grid_.cell_index(s);
    if (s == grid_[j]) return entry(i, j);
    if (s == grid_[j + 1]) return entry(i, j + 1);
    const double w = (s - grid_[j]) / (grid_[j + 1] - grid_[j]);
    return (1.0 - w) * entry(i, j) + w * entry(i, j + 1);
}

TransitionTable transition_table(const MatrixDynamics& dyn, TransitionTableOptions opts) {
    const int d = dyn.grid.points();
    const int m = dyn.order();
    TransitionTable table(dyn.grid, m);

    if (opts.direct) {
        // One bidirectional pass per start node: solve from t_j outward and
        // record Phi(t_i, t_j) at every node passed.
        for (int j = 0; j < d; ++j) {
            std::function<void(int, const Eigen::MatrixXd&)> rec =
                [&](int i, const Eigen::MatrixXd& phi) { table.entry(i, j) = phi; };
            if (j + 1 < d) propagate(dyn, dyn.grid[j], dyn.grid[d - 1], opts.substeps, &rec);
            if (j > 0) propagate(dyn, dyn.grid[j], dyn.grid[0], opts.substeps, &rec);
        }
        return table;
    }

    // Forward pass: Phi(t_i, t_0) for every node.
    std::vector<Eigen::MatrixXd> from_start(static_cast<std::size_t>(d),
                                            Eigen::MatrixXd::Identity(m, m));
    std::function<void(int, const Eigen::MatrixXd&)> rec =
        [&](int i, const Eigen::MatrixXd& phi) { from_start[static_cast<std::size_t>(i)] = phi; };
    propagate(dyn, dyn.grid[0], dyn.grid[d - 1], opts.substeps, &rec);

    std::vector<bool> ill(static_cast<std::size_t>(d), false);
    std::vector<Eigen::MatrixXd> inv(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        const auto& phi_j = from_start[static_cast<std::size_t>(j)];
        if (condition_2x2ish(phi_j) > opts.condition_limit) {
            ill[static_cast<std::size_t>(j)] = true;
        } else {
            inv[static_cast<std::size_t>(j)] = phi_j.inverse();
        }
    }

    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (i == j) continue;
            if (!ill[static_cast<std::size_t>(j)]) {
                table.entry(i, j) =
                    from_start[static_cast<std::size_t>(i)] * inv[static_cast<std::size_t>(j)];
            }
        }
    }
    // Direct solves for columns whose factor was near-singular.
    for (int j = 0; j < d; ++j) {
        if (!ill[static_cast<std::size_t>(j)]) continue;
        std::function<void(int, const Eigen::MatrixXd&)> fix =
            [&](int i, const Eigen::MatrixXd& phi) { table.entry(i, j) = phi; };
        if (j + 1 < d) propagate(dyn, dyn.grid[j], dyn.grid[d - 1], opts.substeps, &fix);
        if (j > 0) propagate(dyn, dyn.grid[j], dyn.grid[0], opts.substeps, &fix);
    }
    return table;
}

TransitionTable transition_table(const LinearDynamics& dyn, TransitionTableOptions opts) {
    return transition_table(to_matrix_dynamics(dyn), opts);
}

Eigen::MatrixXd matexp(const Eigen::MatrixXd& b, double dt) {
    const int m = static_cast<int>(b.rows());
    Eigen::MatrixXd a = dt * b;
    const double norm = a.cwiseAbs().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
        a /= std::pow(2.0, squarings);
    }
    Eigen::MatrixXd result = Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m, m);
    for (int k = 1; k <= 60; ++k) {
        term = (term * a) / static_cast<double>(k);
        result += term;
        if (term.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    for (int k = 0; k < squarings; ++k) result = result * result;
    return result;
}

}  // namespace pdakit
