#include "pdakit/genmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pdakit/io.hpp"
#include "pdakit/parallel.hpp"
#include "pdakit/rng.hpp"

namespace pdakit {

void InitialConditionSpec::validate() const {
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
        throw ArgumentError("InitialConditionSpec: covariance shape must match mean");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw ArgumentError("InitialConditionSpec: covariance must be symmetric");
}

void VdpSpec::validate() const {
    if (mu <= 0.0) throw ArgumentError("VdpSpec: mu must be > 0");
    if (ics.mean.size() != 2) throw ArgumentError("VdpSpec: initial conditions must be 2-dim");
    ics.validate();
}

namespace {

// PSD square root via the spectral decomposition; tolerates semi-definite
// (including zero) covariances.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sigma) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sigma);
    if (solver.info() != Eigen::Success)
        throw NumericalError("initial-condition covariance eigensolver failed");
    if (solver.eigenvalues().minCoeff() < -1e-8 * std::max(1.0, solver.eigenvalues().maxCoeff()))
        throw ArgumentError("initial-condition covariance is not positive semi-definite");
    Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

Eigen::VectorXd draw_ic(const InitialConditionSpec& ics, const Eigen::MatrixXd& sqrt_cov,
                        Rng& rng) {
    Eigen::VectorXd z(ics.mean.size());
    for (int j = 0; j < z.size(); ++j) z[j] = rng.normal();
    return ics.mean + sqrt_cov * z;
}

}  // namespace

CurveSet simulate_linear(const LinearDynamics& dyn, const InitialConditionSpec& ics,
                         const KernelSpec& kernel, int n, std::uint64_t seed, int substeps) {
    dyn.validate();
    ics.validate();
    const int m = dyn.order();
    if (ics.mean.size() != m)
        throw ArgumentError("simulate_linear: initial-condition dimension must equal the order");
    if (n < 1) throw ArgumentError("simulate_linear: n must be >= 1");

    const TimeGrid& grid = dyn.grid;
    const int d = grid.points();
    const Eigen::MatrixXd sqrt_cov = psd_sqrt(ics.covariance);
    const GpSampler sampler(kernel, grid);

    CurveSet out;
    out.grid = grid;
    out.order = m;
    out.deriv.assign(static_cast<std::size_t>(m) + 1, Eigen::MatrixXd(n, d));
    out.disturbances.resize(n, d);

    // Replicate i derives its own sub-streams from (seed, i); mixing rather
    // than plain seed+i keeps streams disjoint across datasets whose base
    // seeds are themselves consecutive.
    std::vector<Eigen::VectorXd> beta_rows;
    beta_rows.reserve(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) beta_rows.emplace_back(dyn.betas.row(j));
    const Eigen::VectorXd alpha =
        dyn.intercept ? *dyn.intercept : Eigen::VectorXd(Eigen::VectorXd::Zero(d));

    parallel_for(0, n, [&](long i) {
        const std::uint64_t curve_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng ic_rng(derive_seed(curve_seed, 0));
        Rng eps_rng(derive_seed(curve_seed, 1));
        const Eigen::VectorXd x0 = draw_ic(ics, sqrt_cov, ic_rng);
        const Eigen::VectorXd eps = sampler.draw(eps_rng);

        auto rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dydt) {
            for (int r = 0; r + 1 < m; ++r) dydt[r] = y[r + 1];
            double top = interp1(grid, alpha, t) + interp1(grid, eps, t);
            for (int j = 0; j < m; ++j)
                top -= interp1(grid, beta_rows[static_cast<std::size_t>(j)], t) * y[j];
            dydt[m - 1] = top;
        };
        const Eigen::MatrixXd traj = solve_ivp(rhs, x0, grid, substeps);

        for (int j = 0; j < m; ++j) out.deriv[static_cast<std::size_t>(j)].row(i) = traj.col(j);
        for (int k = 0; k < d; ++k) {
            double top = (dyn.intercept ? (*dyn.intercept)[k] : 0.0) + eps[k];
            for (int j = 0; j < m; ++j) top -= dyn.betas(j, k) * traj(k, j);
            out.deriv[static_cast<std::size_t>(m)](i, k) = top;
        }
        out.disturbances.row(i) = eps;
    });
    return out;
}

CoupledCurveSet simulate_vdp(const VdpSpec& spec, int n, std::uint64_t seed, int substeps) {
    spec.validate();
    if (n < 1) throw ArgumentError("simulate_vdp: n must be >= 1");
    const TimeGrid& grid = spec.grid;
    const int d = grid.points();
    const double mu = spec.mu;
    const Eigen::MatrixXd sqrt_cov = psd_sqrt(spec.ics.covariance);
    const GpSampler sampler(spec.kernel, grid);

    CoupledCurveSet out;
    out.grid = grid;
    out.x.resize(n, d);
    out.y.resize(n, d);
    out.dx.resize(n, d);
    out.dy.resize(n, d);
    out.eps_x.resize(n, d);
    out.eps_y.resize(n, d);

    parallel_for(0, n, [&](long i) {
        const std::uint64_t curve_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng ic_rng(derive_seed(curve_seed, 0));
        Rng eps_rng_x(derive_seed(curve_seed, 1));
        Rng eps_rng_y(derive_seed(curve_seed, 2));
        const Eigen::VectorXd z0 = draw_ic(spec.ics, sqrt_cov, ic_rng);
        const Eigen::VectorXd ex = sampler.draw(eps_rng_x);
        const Eigen::VectorXd ey = sampler.draw(eps_rng_y);

        auto rhs = [&](double t, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
            if (std::abs(z[0]) > 10.0)
                throw DivergenceError(t, "trajectory ran away (|x| > 10)");
            dz[0] = mu * (z[0] - z[0] * z[0] * z[0] / 3.0 - z[1]) + interp1(grid, ex, t);
            dz[1] = z[0] / mu + interp1(grid, ey, t);
        };
        const Eigen::MatrixXd traj = solve_ivp(rhs, z0, grid, substeps);

        out.x.row(i) = traj.col(0);
        out.y.row(i) = traj.col(1);
        for (int k = 0; k < d; ++k) {
            const double xv = traj(k, 0), yv = traj(k, 1);
            out.dx(i, k) = mu * (xv - xv * xv * xv / 3.0 - yv) + ex[k];
            out.dy(i, k) = xv / mu + ey[k];
        }
        out.eps_x.row(i) = ex;
        out.eps_y.row(i) = ey;
    });
    return out;
}

CoupledCurveSet simulate_coupled_linear(const MatrixDynamics& dyn, const Eigen::MatrixXd& alpha,
                                        const InitialConditionSpec& ics, const KernelSpec& kernel,
                                        int n, std::uint64_t seed, int substeps) {
    if (dyn.order() != 2) throw ArgumentError("simulate_coupled_linear: system must be 2-dim");
    if (alpha.rows() != 2 || alpha.cols() != dyn.grid.points())
        throw ArgumentError("simulate_coupled_linear: alpha must be 2 x D");
    ics.validate();
    if (ics.mean.size() != 2) throw ArgumentError("simulate_coupled_linear: ics must be 2-dim");
    const TimeGrid& grid = dyn.grid;
    const int d = grid.points();
    const Eigen::MatrixXd sqrt_cov = psd_sqrt(ics.covariance);
    const GpSampler sampler(kernel, grid);
    const Eigen::VectorXd alpha_x = alpha.row(0);
    const Eigen::VectorXd alpha_y = alpha.row(1);

    CoupledCurveSet out;
    out.grid = grid;
    out.x.resize(n, d);
    out.y.resize(n, d);
    out.dx.resize(n, d);
    out.dy.resize(n, d);
    out.eps_x.resize(n, d);
    out.eps_y.resize(n, d);

    parallel_for(0, n, [&](long i) {
        const std::uint64_t curve_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng ic_rng(derive_seed(curve_seed, 0));
        Rng eps_rng_x(derive_seed(curve_seed, 1));
        Rng eps_rng_y(derive_seed(curve_seed, 2));
        const Eigen::VectorXd z0 = draw_ic(ics, sqrt_cov, ic_rng);
        const Eigen::VectorXd ex = sampler.draw(eps_rng_x);
        const Eigen::VectorXd ey = sampler.draw(eps_rng_y);

        auto rhs = [&](double t, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
            dz = dyn.at(t) * z;
            dz[0] += interp1(grid, alpha_x, t) + interp1(grid, ex, t);
            dz[1] += interp1(grid, alpha_y, t) + interp1(grid, ey, t);
        };
        const Eigen::MatrixXd traj = solve_ivp(rhs, z0, grid, substeps);

        out.x.row(i) = traj.col(0);
        out.y.row(i) = traj.col(1);
        for (int k = 0; k < d; ++k) {
            const Eigen::Vector2d drift =
                dyn.samples[static_cast<std::size_t>(k)] * traj.row(k).transpose();
            out.dx(i, k) = drift[0] + alpha(0, k) + ex[k];
            out.dy(i, k) = drift[1] + alpha(1, k) + ey[k];
        }
        out.eps_x.row(i) = ex;
        out.eps_y.row(i) = ey;
    });
    return out;
}

double verify_forced_solution(const LinearDynamics& dyn, const CurveSet& curves,
                              TransitionTableOptions opts) {
    if (!curves.has_disturbances())
        throw ArgumentError("verify_forced_solution: curves carry no stored disturbances");
    dyn.validate();
    const int m = dyn.order();
    const TimeGrid& grid = curves.grid;
    const TransitionTable table = transition_table(dyn, opts);

    const int n = curves.n();
    std::vector<double> rep_worst(static_cast<std::size_t>(n), 0.0);
    parallel_for(0, n, [&](long i) {
        double worst = 0.0;
        Eigen::VectorXd x0(m);
        for (int j = 0; j < m; ++j) x0[j] = curves.deriv[static_cast<std::size_t>(j)](i, 0);
        const Eigen::VectorXd eps = curves.disturbances.row(i);
        for (int k = 0; k < grid.points(); ++k) {
            auto forcing = [&](double s) -> Eigen::MatrixXd {
                const double f = dyn.intercept_at(s) + interp1(grid, eps, s);
                return table.at_row(k, s).col(m - 1) * f;
            };
            Eigen::VectorXd pred = table.entry(k, 0) * x0;
            pred += integrate_matrix(grid, forcing, grid.start(), grid[k], m, 1);
            for (int j = 0; j < m; ++j) {
                const double diff =
                    std::abs(pred[j] - curves.deriv[static_cast<std::size_t>(j)](i, k));
                worst = std::max(worst, diff);
            }
        }
        rep_worst[static_cast<std::size_t>(i)] = worst;
    });
    double worst = 0.0;
    for (double v : rep_worst) worst = std::max(worst, v);
    return worst;
}

namespace {

void write_lines(const std::string& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << content;
    if (!file) throw IoError("write to '" + path + "' failed");
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open '" + path + "' for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

TimeGrid grid_from_times(const std::vector<double>& times, const std::string& path) {
    if (times.size() < 2) throw IoError("dataset '" + path + "' has fewer than 2 time points");
    return TimeGrid(times.front(), times.back(), static_cast<int>(times.size()));
}

}  // namespace

void write_curves_csv(const CurveSet& curves, const std::string& path) {
    std::ostringstream out;
    out << "replicate,t";
    for (int j = 0; j <= curves.order; ++j) out << ",d" << j;
    if (curves.has_disturbances()) out << ",eps";
    out << "\n";
    for (int i = 0; i < curves.n(); ++i) {
        for (int k = 0; k < curves.grid.points(); ++k) {
            out << i << ',' << format_double(curves.grid[k]);
            for (int j = 0; j <= curves.order; ++j)
                out << ',' << format_double(curves.deriv[static_cast<std::size_t>(j)](i, k));
            if (curves.has_disturbances()) out << ',' << format_double(curves.disturbances(i, k));
            out << "\n";
        }
    }
    write_lines(path, out.str());
}

CurveSet read_curves_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw IoError("dataset '" + path + "' is empty");
    const auto header = split_csv_line(lines.front());
    if (header.size() < 3 || header[0] != "replicate" || header[1] != "t")
        throw IoError("dataset '" + path + "' must start with a replicate,t,d0,... header");
    int order = -1;
    bool has_eps = false;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c] == "eps") {
            has_eps = true;
        } else if (header[c].size() >= 2 && header[c][0] == 'd') {
            order = std::max(order, std::atoi(header[c].c_str() + 1));
        } else {
            throw IoError("dataset '" + path + "': unexpected column '" + header[c] + "'");
        }
    }
    if (order < 1) throw IoError("dataset '" + path + "' must contain derivative columns d0..dm");
    const std::size_t expected = 2 + static_cast<std::size_t>(order) + 1 + (has_eps ? 1 : 0);

    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = split_csv_line(lines[li]);
        if (fields.size() != expected)
            throw IoError("dataset '" + path + "': wrong field count on line " + std::to_string(li + 1));
        std::vector<double> row;
        row.reserve(expected);
        for (const auto& f : fields) row.push_back(parse_double(f, path));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("dataset '" + path + "' has no data rows");

    std::size_t d = 0;
    while (d < rows.size() && rows[d][0] == rows[0][0]) ++d;
    if (rows.size() % d != 0)
        throw IoError("dataset '" + path + "': incomplete replicate blocks");
    const int n = static_cast<int>(rows.size() / d);
    for (std::size_t k = 0; k < d; ++k) times.push_back(rows[k][1]);

    CurveSet out;
    out.grid = grid_from_times(times, path);
    out.order = order;
    out.deriv.assign(static_cast<std::size_t>(order) + 1,
                     Eigen::MatrixXd(n, static_cast<int>(d)));
    if (has_eps) out.disturbances.resize(n, static_cast<int>(d));
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            const auto& row = rows[static_cast<std::size_t>(i) * d + k];
            for (int j = 0; j <= order; ++j)
                out.deriv[static_cast<std::size_t>(j)](i, static_cast<int>(k)) =
                    row[2 + static_cast<std::size_t>(j)];
            if (has_eps) out.disturbances(i, static_cast<int>(k)) = row[expected - 1];
        }
    }
    return out;
}

void write_coupled_csv(const CoupledCurveSet& curves, const std::string& path) {
    std::ostringstream out;
    out << "replicate,t,x,y,dx,dy";
    if (curves.has_disturbances()) out << ",eps_x,eps_y";
    out << "\n";
    for (int i = 0; i < curves.n(); ++i) {
        for (int k = 0; k < curves.grid.points(); ++k) {
            out << i << ',' << format_double(curves.grid[k]) << ',' << format_double(curves.x(i, k))
                << ',' << format_double(curves.y(i, k)) << ',' << format_double(curves.dx(i, k))
                << ',' << format_double(curves.dy(i, k));
            if (curves.has_disturbances())
                out << ',' << format_double(curves.eps_x(i, k)) << ','
                    << format_double(curves.eps_y(i, k));
            out << "\n";
        }
    }
    write_lines(path, out.str());
}

CoupledCurveSet read_coupled_csv(const std::string& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw IoError("dataset '" + path + "' is empty");
    const auto header = split_csv_line(lines.front());
    const bool has_eps = header.size() == 8;
    if (!(header.size() == 6 || has_eps) || header[0] != "replicate" || header[2] != "x")
        throw IoError("dataset '" + path + "' is not a coupled dataset");

    std::vector<std::vector<double>> rows;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = split_csv_line(lines[li]);
        if (fields.size() != header.size())
            throw IoError("dataset '" + path + "': wrong field count on line " + std::to_string(li + 1));
        std::vector<double> row;
        for (const auto& f : fields) row.push_back(parse_double(f, path));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("dataset '" + path + "' has no data rows");

    std::size_t d = 0;
    while (d < rows.size() && rows[d][0] == rows[0][0]) ++d;
    if (rows.size() % d != 0) throw IoError("dataset '" + path + "': incomplete replicate blocks");
    const int n = static_cast<int>(rows.size() / d);
    std::vector<double> times;
    for (std::size_t k = 0; k < d; ++k) times.push_back(rows[k][1]);

    CoupledCurveSet out;
    out.grid = grid_from_times(times, path);
    const int dd = static_cast<int>(d);
    out.x.resize(n, dd);
    out.y.resize(n, dd);
    out.dx.resize(n, dd);
    out.dy.resize(n, dd);
    if (has_eps) {
        out.eps_x.resize(n, dd);
        out.eps_y.resize(n, dd);
    }
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < dd; ++k) {
            const auto& row = rows[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(k)];
            out.x(i, k) = row[2];
            out.y(i, k) = row[3];
            out.dx(i, k) = row[4];
            out.dy(i, k) = row[5];
            if (has_eps) {
                out.eps_x(i, k) = row[6];
                out.eps_y(i, k) = row[7];
            }
        }
    }
    return out;
}

}  // namespace pdakit
