#include "pdakit/reference.hpp"

namespace pdakit::ref {

OlsResult pointwise_ols(const CurveSet& curves, bool include_intercept,
                        const std::vector<int>& included_orders) {
    const int m = curves.order;
    PdaConfig tmp;
    tmp.included_orders = included_orders;
    const auto orders = tmp.orders_for(m);
    const int n = curves.n();
    const int d = curves.grid.points();
    const int p = static_cast<int>(orders.size()) + (include_intercept ? 1 : 0);
    if (n <= p) throw ArgumentError("pointwise_ols: need more than p replicates");

    OlsResult out;
    out.coefficients.resize(p, d);
    out.residuals.resize(n, d);
    for (int t = 0; t < d; ++t) {
        Eigen::MatrixXd x(n, p);
        int col = 0;
        if (include_intercept) x.col(col++).setOnes();
        for (int o : orders) x.col(col++) = curves.deriv[static_cast<std::size_t>(o)].col(t);
        const Eigen::VectorXd y = curves.deriv[static_cast<std::size_t>(m)].col(t);
        Eigen::MatrixXd gram = x.transpose() * x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const double lmin = eig.eigenvalues().minCoeff();
        if (lmin <= 0.0 || eig.eigenvalues().maxCoeff() / lmin > 1e12) {
            gram.diagonal().array() += 1e-10 * gram.trace() / p;
            out.ridge_times.push_back(curves.grid[t]);
        }
        const Eigen::VectorXd b = gram.ldlt().solve(x.transpose() * y);
        out.coefficients.col(t) = b;
        out.residuals.col(t) = y - x * b;
    }
    return out;
}

std::vector<Eigen::MatrixXd> expected_cross_moment(const TransitionTable& table,
                                                   const std::vector<const CovarianceGrid*>& covs,
                                                   const std::vector<int>& channels, int refine) {
    if (covs.size() != channels.size())
        throw ArgumentError("expected_cross_moment: one covariance per channel");
    const TimeGrid& grid = table.grid();
    const int m = table.order();
    const int d = grid.points();
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(m, m));
    for (int i = 0; i < d; ++i) {
        const double t = grid[i];
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const int ch = channels[c];
            auto integrand = [&](double s) -> Eigen::MatrixXd {
                return table.at_row(i, s).col(ch) * interp2(grid, grid, covs[c]->surface, s, t);
            };
            out[static_cast<std::size_t>(i)].col(ch) =
                integrate_matrix(grid, integrand, grid.start(), t, m, 1, refine);
        }
    }
    return out;
}

}  // namespace pdakit::ref
