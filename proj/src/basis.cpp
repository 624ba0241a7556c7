#include "pdakit/basis.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pdakit/io.hpp"
#include "pdakit/parallel.hpp"

namespace pdakit {

BasisSet concat(const BasisSet& a, const BasisSet& b) {
    if (!a.grid.same_as(b.grid)) throw ArgumentError("concat: basis grids differ");
    BasisSet out;
    out.grid = a.grid;
    out.curves.resize(a.count() + b.count(), a.grid.points());
    out.curves.topRows(a.count()) = a.curves;
    out.curves.bottomRows(b.count()) = b.curves;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

CanonicalBasis canonical_basis(const LinearDynamics& dyn, const TimeGrid& grid, int substeps) {
    dyn.validate();
    if (!dyn.grid.same_as(grid)) throw ArgumentError("canonical_basis: grid mismatch");
    const int m = dyn.order();
    const int d = grid.points();

    // One forward pass records Phi(t, 0) at every node.
    const MatrixDynamics sys = to_matrix_dynamics(dyn);
    std::vector<Eigen::MatrixXd> from_start(static_cast<std::size_t>(d),
                                            Eigen::MatrixXd::Identity(m, m));
    TransitionTableOptions opts;
    opts.substeps = substeps;
    const TransitionTable table = transition_table(sys, opts);
    for (int i = 0; i < d; ++i) from_start[static_cast<std::size_t>(i)] = table.entry(i, 0);

    CanonicalBasis out;
    out.basis.grid = grid;
    out.basis.curves.resize(m, d);
    out.basis.labels.assign(static_cast<std::size_t>(m), "canonical");
    out.stack.assign(static_cast<std::size_t>(m), Eigen::MatrixXd(m, d));
    for (int i = 0; i < d; ++i) {
        const Eigen::MatrixXd& phi = from_start[static_cast<std::size_t>(i)];
        for (int k = 0; k < m; ++k) {
            out.basis.curves(k, i) = phi(0, k);
            for (int r = 0; r < m; ++r) out.stack[static_cast<std::size_t>(r)](k, i) = phi(r, k);
        }
    }
    return out;
}

CovarianceGrid zero_input_cov(const LinearDynamics& dyn, const Eigen::MatrixXd& sigma0,
                              const TimeGrid& grid, int state, int substeps) {
    dyn.validate();
    const int m = dyn.order();
    if (sigma0.rows() != m || sigma0.cols() != m)
        throw ArgumentError("zero_input_cov: Sigma0 must be m x m");
    if (state < 0 || state >= m) throw ArgumentError("zero_input_cov: state out of range");
    const int d = grid.points();

    TransitionTableOptions opts;
    opts.substeps = substeps;
    const TransitionTable table = transition_table(to_matrix_dynamics(dyn), opts);
    Eigen::MatrixXd rows(d, m);  // selected row of Phi(t_i, 0)
    for (int i = 0; i < d; ++i) rows.row(i) = table.entry(i, 0).row(state);
    CovarianceGrid out{grid, rows * sigma0 * rows.transpose()};
    out.symmetrize();
    return out;
}

namespace {

// Weighted propagator rows: a(i, k) = w_i[k] * Phi(t_i, t_k)(state, m-1) for
// k <= i, zero beyond, with w_i the prefix quadrature weights over [0, t_i].
Eigen::MatrixXd weighted_response_rows(const TransitionTable& table, int state) {
    const int d = table.grid().points();
    const int m = table.order();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const Eigen::VectorXd w = prefix_weights(table.grid(), i);
        for (int k = 0; k <= i; ++k) a(i, k) = w[k] * table.entry(i, k)(state, m - 1);
    }
    return a;
}

}  // namespace

CovarianceGrid zero_state_cov(const LinearDynamics& dyn, const CovarianceGrid& cov,
                              const TimeGrid& grid, int state, TransitionTableOptions opts) {
    dyn.validate();
    if (!cov.grid.same_as(grid)) throw ArgumentError("zero_state_cov: covariance grid mismatch");
    const int m = dyn.order();
    if (state < 0 || state >= m) throw ArgumentError("zero_state_cov: state out of range");
    const int d = grid.points();

    const TransitionTable table = transition_table(to_matrix_dynamics(dyn), opts);
    const Eigen::MatrixXd a = weighted_response_rows(table, state);
    const Eigen::MatrixXd t = cov.surface * a.transpose();

    Eigen::MatrixXd s(d, d);
    parallel_for(0, d, [&](long i) {
        for (int j = static_cast<int>(i); j < d; ++j) s(i, j) = a.row(i) * t.col(j);
    });
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < i; ++j) s(i, j) = s(j, i);
    return CovarianceGrid{grid, std::move(s)};
}

namespace ref {

CovarianceGrid zero_state_cov(const LinearDynamics& dyn, const CovarianceGrid& cov,
                              const TimeGrid& grid, int state, TransitionTableOptions opts) {
    dyn.validate();
    const int m = dyn.order();
    const int d = grid.points();
    const TransitionTable table = transition_table(to_matrix_dynamics(dyn), opts);

    std::vector<Eigen::VectorXd> weights;
    weights.reserve(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) weights.push_back(prefix_weights(grid, i));

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k <= i; ++k) {
                const double gi = table.entry(i, k)(state, m - 1) * weights[static_cast<std::size_t>(i)][k];
                double inner = 0.0;
                for (int l = 0; l <= j; ++l)
                    inner += cov.surface(k, l) * table.entry(j, l)(state, m - 1) *
                             weights[static_cast<std::size_t>(j)][l];
                acc += gi * inner;
            }
            s(i, j) = acc;
        }
    }
    CovarianceGrid out{grid, std::move(s)};
    out.symmetrize();
    return out;
}

}  // namespace ref

BasisSet zero_state_eigen_basis(const CovarianceGrid& cov, int k) {
    const EigenPairs pairs = eigenfunctions(cov, k);
    BasisSet out;
    out.grid = cov.grid;
    out.curves = pairs.functions;
    out.labels.assign(static_cast<std::size_t>(k), "zero-state-eigen");
    return out;
}

namespace {

// Cox-de Boor on a clamped uniform knot vector.
double bspline_value(const std::vector<double>& knots, int i, int degree, double t) {
    if (degree == 0)
        return (t >= knots[static_cast<std::size_t>(i)] && t < knots[static_cast<std::size_t>(i + 1)])
                   ? 1.0
                   : 0.0;
    double left = 0.0, right = 0.0;
    const double dl = knots[static_cast<std::size_t>(i + degree)] - knots[static_cast<std::size_t>(i)];
    if (dl > 0.0)
        left = (t - knots[static_cast<std::size_t>(i)]) / dl *
               bspline_value(knots, i, degree - 1, t);
    const double dr =
        knots[static_cast<std::size_t>(i + degree + 1)] - knots[static_cast<std::size_t>(i + 1)];
    if (dr > 0.0)
        right = (knots[static_cast<std::size_t>(i + degree + 1)] - t) / dr *
                bspline_value(knots, i + 1, degree - 1, t);
    return left + right;
}

}  // namespace

BasisSet bspline_basis(const TimeGrid& grid, int count) {
    constexpr int degree = 3;
    if (count < degree + 1) throw ArgumentError("bspline_basis: need at least 4 cubic functions");
    const int interior = count - degree - 1;
    std::vector<double> knots;
    for (int i = 0; i <= degree; ++i) knots.push_back(grid.start());
    for (int i = 1; i <= interior; ++i)
        knots.push_back(grid.start() + (grid.end() - grid.start()) * i / (interior + 1));
    for (int i = 0; i <= degree; ++i) knots.push_back(grid.end());

    BasisSet out;
    out.grid = grid;
    out.curves.resize(count, grid.points());
    out.labels.assign(static_cast<std::size_t>(count), "external");
    for (int k = 0; k < count; ++k) {
        for (int i = 0; i < grid.points(); ++i) {
            double t = grid[i];
            // Half-open support convention: close the last basis at the end.
            if (i == grid.points() - 1 && k == count - 1) {
                out.curves(k, i) = 1.0;
            } else {
                out.curves(k, i) = bspline_value(knots, k, degree, t);
            }
        }
    }
    return out;
}

BasisSet residual_fpca_basis(const Eigen::MatrixXd& residuals, const TimeGrid& grid, int k) {
    const CovarianceGrid cov = empirical_cov(residuals, grid);
    const EigenPairs pairs = eigenfunctions(cov, k);
    BasisSet out;
    out.grid = grid;
    out.curves = pairs.functions;
    out.labels.assign(static_cast<std::size_t>(k), "external");
    return out;
}

BasisRegression basis_regress(const CurveSet& curves, const BasisSet& basis) {
    if (!curves.grid.same_as(basis.grid)) throw ArgumentError("basis_regress: grid mismatch");
    const int n = curves.n();
    const int k = basis.count();
    if (k >= n) throw ArgumentError("basis_regress: need more curves than basis functions");
    const Eigen::MatrixXd& x = curves.deriv.front();
    const Eigen::VectorXd w = trapezoid_weights(curves.grid);

    const Eigen::MatrixXd bw = basis.curves * w.asDiagonal();  // K x D
    Eigen::MatrixXd gram = bw * basis.curves.transpose();
    gram = 0.5 * (gram + gram.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (lmin <= 0.0) throw SingularityError("basis_regress: basis Gram is singular under quadrature");

    BasisRegression out;
    out.gram_condition = lmax / lmin;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw SingularityError("basis_regress: basis Gram factorization failed");
    out.coefficients = llt.solve(bw * x.transpose()).transpose();  // N x K
    out.residuals = x - out.coefficients * basis.curves;

    out.isse = (out.residuals.array().square().matrix() * w).sum();
    double r2_acc = 0.0;
    for (int t = 0; t < curves.grid.points(); ++t) {
        const double num = out.residuals.col(t).squaredNorm();
        const double den = x.col(t).squaredNorm();
        if (den > 0.0) r2_acc += w[t] * num / den;
    }
    out.r2_int = r2_acc / (curves.grid.end() - curves.grid.start());
    return out;
}

MeanDecomposition mean_decomposition(const LinearDynamics& dyn, const Eigen::VectorXd& mu0,
                                     const TimeGrid& grid, int state, int refine,
                                     TransitionTableOptions opts) {
    dyn.validate();
    if (!dyn.intercept)
        throw ArgumentError("mean_decomposition: dynamics carry no intercept function");
    const int m = dyn.order();
    if (mu0.size() != m) throw ArgumentError("mean_decomposition: mu0 dimension mismatch");
    const int d = grid.points();
    const TransitionTable table = transition_table(to_matrix_dynamics(dyn), opts);

    MeanDecomposition out;
    out.ic_component.resize(d);
    out.intercept_component.resize(d);
    for (int i = 0; i < d; ++i) {
        out.ic_component[i] = (table.entry(i, 0) * mu0)(state);
        auto integrand = [&](double s) -> Eigen::MatrixXd {
            return table.at_row(i, s).col(m - 1) * dyn.intercept_at(s);
        };
        out.intercept_component[i] =
            integrate_matrix(grid, integrand, grid.start(), grid[i], m, 1, refine)(state, 0);
    }
    out.total = out.ic_component + out.intercept_component;
    return out;
}

void write_surface_csv(const CovarianceGrid& cov, const std::string& path) {
    std::ostringstream out;
    out << "s,t,value\n";
    for (int i = 0; i < cov.grid.points(); ++i)
        for (int j = 0; j < cov.grid.points(); ++j)
            out << format_double(cov.grid[i]) << ',' << format_double(cov.grid[j]) << ','
                << format_double(cov.surface(i, j)) << "\n";
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << out.str();
    if (!file) throw IoError("write to '" + path + "' failed");
}

void write_basis_csv(const BasisSet& basis, const std::string& path) {
    std::vector<std::pair<std::string, Eigen::VectorXd>> columns;
    for (int k = 0; k < basis.count(); ++k)
        columns.emplace_back("b" + std::to_string(k + 1), basis.curves.row(k));
    write_curve_csv(basis.grid, columns, path);
}

void write_curve_csv(const TimeGrid& grid,
                     const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                     const std::string& path) {
    std::ostringstream out;
    out << "t";
    for (const auto& [name, values] : columns) out << ',' << name;
    out << "\n";
    for (int i = 0; i < grid.points(); ++i) {
        out << format_double(grid[i]);
        for (const auto& [name, values] : columns) out << ',' << format_double(values[i]);
        out << "\n";
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << out.str();
    if (!file) throw IoError("write to '" + path + "' failed");
}

}  // namespace pdakit
