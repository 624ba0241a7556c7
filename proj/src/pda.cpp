#include "pdakit/pda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pdakit/io.hpp"
#include "pdakit/parallel.hpp"

namespace pdakit {

void PdaConfig::validate(int order) const {
    if (iterations < 0 || iterations > 100)
        throw ArgumentError("PdaConfig: iterations must be in [0, 100]");
    for (int o : included_orders)
        if (o < 0 || o >= order)
            throw ArgumentError("PdaConfig: included order " + std::to_string(o) +
                                " outside 0.." + std::to_string(order - 1));
    if (post_smooth_lambda < 0.0) throw ArgumentError("PdaConfig: smoothing penalty must be >= 0");
    if (quad_refine < 2 || quad_refine % 2 != 0)
        throw ArgumentError("PdaConfig: quad_refine must be even and >= 2");
}

std::vector<int> PdaConfig::orders_for(int order) const {
    std::vector<int> out = included_orders;
    if (out.empty()) {
        out.resize(static_cast<std::size_t>(order));
        for (int o = 0; o < order; ++o) out[static_cast<std::size_t>(o)] = o;
    } else {
        std::sort(out.begin(), out.end());
        if (std::adjacent_find(out.begin(), out.end()) != out.end())
            throw ArgumentError("PdaConfig: duplicate included order");
    }
    return out;
}

namespace {

constexpr double kConditionLimit = 1e12;

// Per-node design matrices, ridged Gram inverses, and diagnostics shared by
// the pointwise solvers and the bias iterations.
struct DesignSet {
    std::vector<Eigen::MatrixXd> design;    // D entries, N x p
    std::vector<Eigen::MatrixXd> gram_inv;  // D entries, p x p
    std::vector<double> ridge_times;
    int p = 0;
};

DesignSet build_designs(const std::vector<const Eigen::MatrixXd*>& covariates,
                        bool include_intercept, const TimeGrid& grid) {
    const int d = grid.points();
    const auto n = covariates.empty() ? 0 : covariates.front()->rows();
    const int p = static_cast<int>(covariates.size()) + (include_intercept ? 1 : 0);
    DesignSet out;
    out.p = p;
    out.design.resize(static_cast<std::size_t>(d));
    out.gram_inv.resize(static_cast<std::size_t>(d));
    for (int t = 0; t < d; ++t) {
        Eigen::MatrixXd x(n, p);
        int col = 0;
        if (include_intercept) x.col(col++).setOnes();
        for (const auto* cov : covariates) x.col(col++) = cov->col(t);
        Eigen::MatrixXd gram = x.transpose() * x;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
        const double lmax = eig.eigenvalues().maxCoeff();
        const double lmin = eig.eigenvalues().minCoeff();
        if (lmin <= 0.0 || lmax / lmin > kConditionLimit) {
            gram.diagonal().array() += 1e-10 * gram.trace() / p;
            out.ridge_times.push_back(grid[t]);
        }
        Eigen::MatrixXd inv = gram.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
        if (!inv.allFinite())
            throw SingularityError("pointwise design is singular at t = " +
                                   std::to_string(grid[t]));
        out.design[static_cast<std::size_t>(t)] = std::move(x);
        out.gram_inv[static_cast<std::size_t>(t)] = std::move(inv);
    }
    return out;
}

Eigen::MatrixXd solve_coefficients(const DesignSet& designs, const Eigen::MatrixXd& response) {
    const int d = static_cast<int>(designs.design.size());
    Eigen::MatrixXd coef(designs.p, d);
    parallel_for(0, d, [&](long t) {
        const auto& x = designs.design[static_cast<std::size_t>(t)];
        coef.col(t) = designs.gram_inv[static_cast<std::size_t>(t)] *
                      (x.transpose() * response.col(t));
    });
    return coef;
}

Eigen::MatrixXd compute_residuals(const DesignSet& designs, const Eigen::MatrixXd& response,
                                  const Eigen::MatrixXd& coef) {
    Eigen::MatrixXd resid(response.rows(), response.cols());
    const int d = static_cast<int>(designs.design.size());
    for (int t = 0; t < d; ++t)
        resid.col(t) = response.col(t) - designs.design[static_cast<std::size_t>(t)] * coef.col(t);
    return resid;
}

CovarianceGrid effective_covariance(const CovarianceGrid& raw, const PdaConfig& config) {
    CovarianceGrid cov = raw;
    if (config.post_smooth_lambda > 0.0) {
        const int d = cov.grid.points();
        Eigen::MatrixXd smoothed(d, d);
        for (int c = 0; c < d; ++c)
            smoothed.col(c) = post_smooth(cov.surface.col(c), config.post_smooth_lambda);
        for (int r = 0; r < d; ++r)
            smoothed.row(r) = post_smooth(smoothed.row(r).transpose(), config.post_smooth_lambda)
                                  .transpose();
        cov.surface = std::move(smoothed);
        cov.symmetrize();
    }
    if (config.truncate_covariance) cov = truncate_covariance(cov, 0.99);
    return cov;
}

std::vector<std::string> single_labels(bool intercept, const std::vector<int>& orders) {
    std::vector<std::string> labels;
    if (intercept) labels.push_back("alpha");
    for (int o : orders) labels.push_back("beta" + std::to_string(o));
    return labels;
}

}  // namespace

OlsResult pointwise_ols(const CurveSet& curves, bool include_intercept,
                        const std::vector<int>& included_orders) {
    const int m = curves.order;
    PdaConfig tmp;
    tmp.included_orders = included_orders;
    const auto orders = tmp.orders_for(m);
    const int p = static_cast<int>(orders.size()) + (include_intercept ? 1 : 0);
    if (curves.n() <= p)
        throw ArgumentError("pointwise_ols: need more than " + std::to_string(p) + " replicates");

    std::vector<const Eigen::MatrixXd*> covs;
    for (int o : orders) covs.push_back(&curves.deriv[static_cast<std::size_t>(o)]);
    DesignSet designs = build_designs(covs, include_intercept, curves.grid);
    const Eigen::MatrixXd& response = curves.deriv[static_cast<std::size_t>(m)];

    OlsResult out;
    out.coefficients = solve_coefficients(designs, response);
    out.residuals = compute_residuals(designs, response, out.coefficients);
    out.ridge_times = std::move(designs.ridge_times);
    return out;
}

MlsResult pointwise_mls(const CoupledCurveSet& curves, bool include_intercept) {
    const int p = 2 + (include_intercept ? 1 : 0);
    if (curves.n() <= p + (include_intercept ? 0 : 1))
        throw ArgumentError("pointwise_mls: need more than " + std::to_string(p + 1) + " replicates");
    std::vector<const Eigen::MatrixXd*> covs{&curves.x, &curves.y};
    DesignSet designs = build_designs(covs, include_intercept, curves.grid);

    MlsResult out;
    out.coefficients[0] = solve_coefficients(designs, curves.dx);
    out.coefficients[1] = solve_coefficients(designs, curves.dy);
    out.residuals[0] = compute_residuals(designs, curves.dx, out.coefficients[0]);
    out.residuals[1] = compute_residuals(designs, curves.dy, out.coefficients[1]);
    out.ridge_times = std::move(designs.ridge_times);
    return out;
}

std::vector<Eigen::MatrixXd> expected_cross_moment(const TransitionTable& table,
                                                   const std::vector<const CovarianceGrid*>& covs,
                                                   const std::vector<int>& channels, int refine) {
    if (covs.size() != channels.size())
        throw ArgumentError("expected_cross_moment: one covariance per channel");
    const TimeGrid& grid = table.grid();
    const int m = table.order();
    for (const auto* cov : covs)
        if (!cov->grid.same_as(grid))
            throw ArgumentError("expected_cross_moment: covariance grid mismatch");
    const int d = grid.points();

    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(d),
                                     Eigen::MatrixXd::Zero(m, m));
    parallel_for(0, d, [&](long i) {
        const double t = grid[static_cast<int>(i)];
        Eigen::MatrixXd& acc = out[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const int ch = channels[c];
            auto integrand = [&](double s) -> Eigen::MatrixXd {
                return table.at_row(static_cast<int>(i), s).col(ch) *
                       interp2(grid, grid, covs[c]->surface, s, t);
            };
            acc.col(ch) =
                integrate_matrix(grid, integrand, grid.start(), t, m, 1, refine);
        }
    });
    return out;
}

std::vector<Eigen::MatrixXd> expected_cross_moment(const LinearDynamics& dyn,
                                                   const CovarianceGrid& cov, const TimeGrid& grid,
                                                   int refine, TransitionTableOptions opts) {
    if (!dyn.grid.same_as(grid))
        throw ArgumentError("expected_cross_moment: dynamics grid mismatch");
    const TransitionTable table = transition_table(dyn, opts);
    return expected_cross_moment(table, {&cov}, {dyn.order() - 1}, refine);
}

PdaFit bias_reduce(const CurveSet& curves, const PdaConfig& config) {
    const int m = curves.order;
    config.validate(m);
    const auto orders = config.orders_for(m);
    const bool intercept = config.include_intercept;
    const int n = curves.n();
    const int d = curves.grid.points();
    const int p = static_cast<int>(orders.size()) + (intercept ? 1 : 0);
    if (n <= p) throw ArgumentError("bias_reduce: need more than p replicates");

    std::vector<const Eigen::MatrixXd*> covs;
    for (int o : orders) covs.push_back(&curves.deriv[static_cast<std::size_t>(o)]);
    DesignSet designs = build_designs(covs, intercept, curves.grid);
    const Eigen::MatrixXd& response = curves.deriv[static_cast<std::size_t>(m)];

    PdaFit fit;
    fit.grid = curves.grid;
    fit.order = m;
    fit.include_intercept = intercept;
    fit.included_orders = orders;
    fit.labels = single_labels(intercept, orders);
    fit.ridge_times = designs.ridge_times;

    const Eigen::MatrixXd coef_ols = solve_coefficients(designs, response);
    Eigen::MatrixXd resid = compute_residuals(designs, response, coef_ols);
    fit.history.push_back(PdaIteration{coef_ols, Eigen::MatrixXd::Zero(p, d),
                                       empirical_cov(resid, curves.grid)});

    TransitionTableOptions topts;
    topts.direct = !config.table_speedup;
    topts.substeps = config.substeps;

    for (int j = 1; j <= config.iterations; ++j) {
        try {
            const PdaIteration& prev = fit.history.back();
            const CovarianceGrid cov = effective_covariance(prev.residual_cov, config);

            // Companion dynamics from the current regression coefficients;
            // excluded orders stay at zero.
            LinearDynamics dyn;
            dyn.grid = curves.grid;
            dyn.betas = Eigen::MatrixXd::Zero(m, d);
            for (std::size_t r = 0; r < orders.size(); ++r)
                dyn.betas.row(orders[r]) =
                    -prev.coefficients.row(static_cast<int>(r) + (intercept ? 1 : 0));

            const TransitionTable table = transition_table(to_matrix_dynamics(dyn), topts);
            const auto moments =
                expected_cross_moment(table, {&cov}, {m - 1}, config.quad_refine);

            Eigen::MatrixXd bias(p, d);
            parallel_for(0, d, [&](long t) {
                Eigen::VectorXd numerator = Eigen::VectorXd::Zero(p);
                int row = intercept ? 1 : 0;
                for (int o : orders)
                    numerator[row++] = moments[static_cast<std::size_t>(t)](o, m - 1);
                bias.col(t) =
                    static_cast<double>(n) *
                    (designs.gram_inv[static_cast<std::size_t>(t)] * numerator);
            });

            const Eigen::MatrixXd coef = coef_ols - bias;
            resid = compute_residuals(designs, response, coef);
            fit.history.push_back(PdaIteration{coef, bias, empirical_cov(resid, curves.grid)});

            if (config.early_stop && j >= 1) {
                const Eigen::VectorXd w = trapezoid_weights(curves.grid);
                const Eigen::MatrixXd delta = coef - fit.history[fit.history.size() - 2].coefficients;
                const double change = (delta.array().square().matrix() * w).sum();
                const double scale =
                    (fit.history[fit.history.size() - 2].coefficients.array().square().matrix() * w)
                        .sum();
                if (change <= config.early_stop_tol * std::max(scale, 1e-300)) {
                    fit.early_stop_iteration = j;
                    break;
                }
            }
        } catch (const NumericalError& err) {
            fit.failed = true;
            fit.failure_message = "iteration " + std::to_string(j) + ": " + err.what();
            break;
        }
    }
    fit.residuals = std::move(resid);
    return fit;
}

CoupledPdaFit bias_reduce_coupled(const CoupledCurveSet& curves, const PdaConfig& config) {
    config.validate(2);
    if (!config.included_orders.empty())
        throw ArgumentError("bias_reduce_coupled: order selection applies to single-response fits");
    const bool intercept = config.include_intercept;
    const int n = curves.n();
    const int d = curves.grid.points();
    const int p = 2 + (intercept ? 1 : 0);
    if (n <= p + 1) throw ArgumentError("bias_reduce_coupled: need more than p+1 replicates");

    std::vector<const Eigen::MatrixXd*> covariates{&curves.x, &curves.y};
    DesignSet designs = build_designs(covariates, intercept, curves.grid);

    const auto make_fit = [&](const char* a, const char* b0, const char* b1) {
        PdaFit fit;
        fit.grid = curves.grid;
        fit.order = 2;
        fit.include_intercept = intercept;
        fit.included_orders = {0, 1};
        if (intercept) fit.labels.push_back(a);
        fit.labels.push_back(b0);
        fit.labels.push_back(b1);
        fit.ridge_times = designs.ridge_times;
        return fit;
    };
    CoupledPdaFit out{make_fit("alpha_x", "beta_xx", "beta_xy"),
                      make_fit("alpha_y", "beta_yx", "beta_yy")};

    const std::array<const Eigen::MatrixXd*, 2> responses{&curves.dx, &curves.dy};
    std::array<Eigen::MatrixXd, 2> coef_ols;
    std::array<Eigen::MatrixXd, 2> resid;
    std::array<PdaFit*, 2> fits{&out.x, &out.y};
    for (int r = 0; r < 2; ++r) {
        coef_ols[r] = solve_coefficients(designs, *responses[r]);
        resid[r] = compute_residuals(designs, *responses[r], coef_ols[r]);
        fits[r]->history.push_back(PdaIteration{coef_ols[r], Eigen::MatrixXd::Zero(p, d),
                                                empirical_cov(resid[r], curves.grid)});
    }

    TransitionTableOptions topts;
    topts.direct = !config.table_speedup;
    topts.substeps = config.substeps;
    const int base = intercept ? 1 : 0;

    for (int j = 1; j <= config.iterations; ++j) {
        try {
            std::array<CovarianceGrid, 2> cov{
                effective_covariance(fits[0]->history.back().residual_cov, config),
                effective_covariance(fits[1]->history.back().residual_cov, config)};

            // Jacobian samples from the current estimates of both equations.
            MatrixDynamics dyn;
            dyn.grid = curves.grid;
            dyn.samples.resize(static_cast<std::size_t>(d));
            for (int t = 0; t < d; ++t) {
                Eigen::MatrixXd a(2, 2);
                a(0, 0) = fits[0]->history.back().coefficients(base + 0, t);
                a(0, 1) = fits[0]->history.back().coefficients(base + 1, t);
                a(1, 0) = fits[1]->history.back().coefficients(base + 0, t);
                a(1, 1) = fits[1]->history.back().coefficients(base + 1, t);
                dyn.samples[static_cast<std::size_t>(t)] = std::move(a);
            }

            const TransitionTable table = transition_table(dyn, topts);
            const auto moments = expected_cross_moment(table, {&cov[0], &cov[1]}, {0, 1},
                                                       config.quad_refine);

            for (int r = 0; r < 2; ++r) {
                Eigen::MatrixXd bias(p, d);
                parallel_for(0, d, [&](long t) {
                    Eigen::VectorXd numerator = Eigen::VectorXd::Zero(p);
                    numerator[base + 0] = moments[static_cast<std::size_t>(t)](0, r);
                    numerator[base + 1] = moments[static_cast<std::size_t>(t)](1, r);
                    bias.col(t) = static_cast<double>(n) *
                                  (designs.gram_inv[static_cast<std::size_t>(t)] * numerator);
                });
                const Eigen::MatrixXd coef = coef_ols[r] - bias;
                resid[r] = compute_residuals(designs, *responses[r], coef);
                fits[r]->history.push_back(
                    PdaIteration{coef, bias, empirical_cov(resid[r], curves.grid)});
            }
        } catch (const NumericalError& err) {
            for (int r = 0; r < 2; ++r) {
                fits[r]->failed = true;
                fits[r]->failure_message = "iteration " + std::to_string(j) + ": " + err.what();
            }
            break;
        }
    }
    out.x.residuals = std::move(resid[0]);
    out.y.residuals = std::move(resid[1]);
    return out;
}

Eigen::VectorXd post_smooth(const Eigen::VectorXd& samples, double lambda) {
    if (lambda < 0.0) throw ArgumentError("post_smooth: lambda must be >= 0");
    if (lambda == 0.0) return samples;
    const auto d = samples.size();
    if (d < 3) return samples;
    Eigen::MatrixXd diff2 = Eigen::MatrixXd::Zero(d - 2, d);
    for (Eigen::Index r = 0; r < d - 2; ++r) {
        diff2(r, r) = 1.0;
        diff2(r, r + 1) = -2.0;
        diff2(r, r + 2) = 1.0;
    }
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) + lambda * diff2.transpose() * diff2;
    return a.llt().solve(samples);
}

namespace {

using nlohmann::json;

json grid_to_json(const TimeGrid& grid) {
    return json{{"start", grid.start()}, {"end", grid.end()}, {"points", grid.points()}};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    const auto nr = rows.size();
    if (nr == 0) return {};
    const auto nc = rows.front().size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t c = 0; c < nc; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][c].get<double>();
    return m;
}

json fit_body(const PdaFit& fit, bool include_covariance) {
    json iterations = json::array();
    for (const auto& it : fit.history) {
        json entry{{"coefficients", matrix_to_json(it.coefficients)},
                   {"bias", matrix_to_json(it.bias)}};
        if (include_covariance) entry["residual_covariance"] = matrix_to_json(it.residual_cov.surface);
        iterations.push_back(std::move(entry));
    }
    return json{{"grid", grid_to_json(fit.grid)},
                {"order", fit.order},
                {"include_intercept", fit.include_intercept},
                {"included_orders", fit.included_orders},
                {"labels", fit.labels},
                {"iterations", std::move(iterations)},
                {"diagnostics",
                 {{"ridge_times", fit.ridge_times},
                  {"early_stop_iteration", fit.early_stop_iteration},
                  {"failed", fit.failed},
                  {"failure_message", fit.failure_message}}}};
}

void dump_json(const json& j, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << j.dump(1) << "\n";
    if (!file) throw IoError("write to '" + path + "' failed");
}

}  // namespace

void write_fit_json(const PdaFit& fit, const std::string& path, bool include_covariance) {
    json j = fit_body(fit, include_covariance);
    j["coupled"] = false;
    dump_json(j, path);
}

void write_fit_json(const CoupledPdaFit& fit, const std::string& path, bool include_covariance) {
    json j{{"coupled", true},
           {"x", fit_body(fit.x, include_covariance)},
           {"y", fit_body(fit.y, include_covariance)}};
    dump_json(j, path);
}

PdaFit read_fit_json(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open '" + path + "' for reading");
    json j;
    try {
        file >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    if (j.value("coupled", false))
        throw IoError("'" + path + "' holds a coupled fit; a single-response fit is required");
    PdaFit fit;
    const auto& g = j.at("grid");
    fit.grid = TimeGrid(g.at("start").get<double>(), g.at("end").get<double>(),
                        g.at("points").get<int>());
    fit.order = j.at("order").get<int>();
    fit.include_intercept = j.at("include_intercept").get<bool>();
    fit.included_orders = j.at("included_orders").get<std::vector<int>>();
    fit.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& entry : j.at("iterations")) {
        PdaIteration it;
        it.coefficients = matrix_from_json(entry.at("coefficients"));
        it.bias = matrix_from_json(entry.at("bias"));
        it.residual_cov.grid = fit.grid;
        if (entry.contains("residual_covariance"))
            it.residual_cov.surface = matrix_from_json(entry.at("residual_covariance"));
        fit.history.push_back(std::move(it));
    }
    if (fit.history.empty()) throw IoError("'" + path + "' holds no iterations");
    const auto& diag = j.at("diagnostics");
    fit.ridge_times = diag.at("ridge_times").get<std::vector<double>>();
    fit.early_stop_iteration = diag.at("early_stop_iteration").get<int>();
    fit.failed = diag.at("failed").get<bool>();
    fit.failure_message = diag.at("failure_message").get<std::string>();
    return fit;
}

}  // namespace pdakit
