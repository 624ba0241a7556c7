#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>

#include "pdakit/basis.hpp"
#include "pdakit/io.hpp"
#include "pdakit/parallel.hpp"
#include "pdakit/pda.hpp"
#include "pdakit/studies.hpp"

namespace fs = std::filesystem;
using namespace pdakit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgument = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd diag_matrix(const std::vector<double>& v, int dim) {
    if (v.size() == 1) return v[0] * Eigen::MatrixXd::Identity(dim, dim);
    if (static_cast<int>(v.size()) != dim)
        throw ArgumentError("--sigma0 needs 1 value or one per state");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) m(i, i) = v[static_cast<std::size_t>(i)];
    return m;
}

fs::path out_path(const std::string& out_dir, const std::string& name) {
    if (out_dir.empty()) return name;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    return fs::path(out_dir) / name;
}

struct SimulateArgs {
    std::string model = "shm";
    int n = 20;
    int grid_points = 200;
    double t_max = 0.0;  // 0 = model default
    double sigma = 0.25;
    double lengthscale = 2.0;
    std::vector<double> mu0;
    std::vector<double> sigma0{0.05};
    std::vector<double> betas;  // regression convention
    double alpha = 0.0;
    double mu = 1.0;
    std::string out;
};

int cmd_simulate(const SimulateArgs& args, std::uint64_t seed, const std::string& out_dir) {
    const fs::path path = args.out.empty() ? out_path(out_dir, "dataset.csv") : fs::path(args.out);
    KernelSpec kernel{args.sigma, args.lengthscale};

    if (args.model == "vdp") {
        const double t_max = args.t_max > 0.0 ? args.t_max : 13.0;
        TimeGrid grid(0.0, t_max, args.grid_points);
        InitialConditionSpec ics;
        if (args.mu0.empty()) {
            ics.mean = Eigen::Vector2d(1.99, -0.91);
        } else {
            ics.mean = to_vector(args.mu0);
        }
        ics.covariance = diag_matrix(args.sigma0, 2);
        VdpSpec spec{args.mu, kernel, ics, grid};
        const CoupledCurveSet curves = simulate_vdp(spec, args.n, seed);
        write_coupled_csv(curves, path.string());
        std::cout << "model=vdp mu=" << args.mu << " n=" << curves.n()
                  << " grid=" << grid.points() << " t=[0," << t_max << "] -> " << path.string()
                  << "\n";
        return kExitOk;
    }

    std::vector<double> betas = args.betas;
    if (args.model == "shm") {
        if (!betas.empty()) throw ArgumentError("--betas applies to --model linear only");
        betas = {-1.0, 0.0};
    } else if (args.model == "linear") {
        if (betas.empty()) throw ArgumentError("--model linear needs --betas (regression form)");
    } else {
        throw ArgumentError("--model must be shm, linear or vdp");
    }

    const int m = static_cast<int>(betas.size());
    const double t_max = args.t_max > 0.0 ? args.t_max : 2.0 * M_PI;
    TimeGrid grid(0.0, t_max, args.grid_points);
    LinearDynamics dyn;
    dyn.grid = grid;
    dyn.betas.resize(m, grid.points());
    for (int j = 0; j < m; ++j)
        dyn.betas.row(j).setConstant(-betas[static_cast<std::size_t>(j)]);
    dyn.intercept = Eigen::VectorXd::Constant(grid.points(), args.alpha);

    InitialConditionSpec ics;
    ics.mean = args.mu0.empty() ? Eigen::VectorXd(Eigen::VectorXd::Zero(m)) : to_vector(args.mu0);
    if (ics.mean.size() != m) throw ArgumentError("--mu0 needs one value per state");
    ics.covariance = diag_matrix(args.sigma0, m);

    const CurveSet curves = simulate_linear(dyn, ics, kernel, args.n, seed);
    write_curves_csv(curves, path.string());
    std::cout << "model=" << args.model << " order=" << m << " n=" << curves.n()
              << " grid=" << grid.points() << " t=[0," << t_max << "] -> " << path.string() << "\n";
    return kExitOk;
}

struct FitArgs {
    std::string data;
    bool coupled = false;
    int order = 0;  // 0 = take from file
    bool intercept = false;
    int iterations = 0;
    std::vector<int> orders;
    double post_smooth = 0.0;
    bool truncate_cov = false;
    bool no_speedup = false;
    bool include_cov = false;
    bool early_stop = false;
    std::string out;
};

void print_fit_summary(const PdaFit& fit) {
    const Eigen::VectorXd w = trapezoid_weights(fit.grid);
    const double span = fit.grid.end() - fit.grid.start();
    for (std::size_t c = 0; c < fit.labels.size(); ++c) {
        const double mean =
            (fit.final_coefficients().row(static_cast<int>(c)) * w).value() / span;
        std::cout << "  " << fit.labels[c] << ": mean over t = " << mean << "\n";
    }
    if (!fit.ridge_times.empty())
        std::cout << "  warning: near-singular design ridged at " << fit.ridge_times.size()
                  << " time points\n";
    if (fit.early_stop_iteration >= 0)
        std::cout << "  early stop after iteration " << fit.early_stop_iteration << "\n";
    if (fit.failed) std::cout << "  FAILED: " << fit.failure_message << "\n";
}

int cmd_fit(const FitArgs& args, const std::string& out_dir) {
    PdaConfig config;
    config.include_intercept = args.intercept;
    config.iterations = args.iterations;
    config.included_orders = args.orders;
    config.post_smooth_lambda = args.post_smooth;
    config.truncate_covariance = args.truncate_cov;
    config.table_speedup = !args.no_speedup;
    config.early_stop = args.early_stop;

    const fs::path path = args.out.empty() ? out_path(out_dir, "fit.json") : fs::path(args.out);
    if (args.coupled) {
        const CoupledCurveSet curves = read_coupled_csv(args.data);
        if (args.order != 0 && args.order != 2)
            throw ArgumentError("coupled fits are first-order two-state models (--order 2)");
        config.include_intercept = true;
        const CoupledPdaFit fit = bias_reduce_coupled(curves, config);
        write_fit_json(fit, path.string(), args.include_cov);
        std::cout << "coupled fit (" << fit.x.history.size() - 1 << " iterations) -> "
                  << path.string() << "\n";
        print_fit_summary(fit.x);
        print_fit_summary(fit.y);
        return (fit.x.failed || fit.y.failed) ? kExitNumerical : kExitOk;
    }

    const CurveSet curves = read_curves_csv(args.data);
    if (args.order != 0 && args.order != curves.order)
        throw ArgumentError("--order " + std::to_string(args.order) +
                            " does not match the dataset (order " +
                            std::to_string(curves.order) + ")");
    const PdaFit fit = bias_reduce(curves, config);
    write_fit_json(fit, path.string(), args.include_cov);
    std::cout << "fit of order " << fit.order << " (" << fit.history.size() - 1
              << " iterations) -> " << path.string() << "\n";
    print_fit_summary(fit);
    return fit.failed ? kExitNumerical : kExitOk;
}

struct BasisArgs {
    std::string fit;
    std::vector<double> sigma0{0.05};
    double kernel_sigma = 0.25;
    double kernel_lengthscale = 2.0;
    int eig_k = 4;
    bool mean = false;
    std::vector<double> mu0;
};

LinearDynamics dynamics_from_fit(const PdaFit& fit) {
    LinearDynamics dyn;
    dyn.grid = fit.grid;
    dyn.betas = Eigen::MatrixXd::Zero(fit.order, fit.grid.points());
    const int base = fit.include_intercept ? 1 : 0;
    for (std::size_t r = 0; r < fit.included_orders.size(); ++r)
        dyn.betas.row(fit.included_orders[r]) =
            -fit.final_coefficients().row(static_cast<int>(r) + base);
    if (fit.include_intercept)
        dyn.intercept = fit.final_coefficients().row(0).transpose();
    return dyn;
}

int cmd_basis(const BasisArgs& args, const std::string& out_dir) {
    const PdaFit fit = read_fit_json(args.fit);
    const LinearDynamics dyn = dynamics_from_fit(fit);
    const TimeGrid& grid = fit.grid;

    if (args.mean && !fit.include_intercept)
        throw ArgumentError("--mean requires a fit with an intercept");

    const CanonicalBasis canonical = canonical_basis(dyn, grid);
    write_basis_csv(canonical.basis, out_path(out_dir, "canonical_basis.csv").string());

    const Eigen::MatrixXd sigma0 = diag_matrix(args.sigma0, fit.order);
    const CovarianceGrid zi = zero_input_cov(dyn, sigma0, grid);
    write_surface_csv(zi, out_path(out_dir, "zero_input.csv").string());

    KernelSpec kernel{args.kernel_sigma, args.kernel_lengthscale};
    const CovarianceGrid forcing = kernel_covariance(kernel, grid);
    const CovarianceGrid zs = zero_state_cov(dyn, forcing, grid);
    write_surface_csv(zs, out_path(out_dir, "zero_state.csv").string());

    const BasisSet eig = zero_state_eigen_basis(zs, args.eig_k);
    write_basis_csv(eig, out_path(out_dir, "zero_state_eigenfunctions.csv").string());

    if (args.mean) {
        Eigen::VectorXd mu0 = args.mu0.empty() ? Eigen::VectorXd(Eigen::VectorXd::Zero(fit.order))
                                               : to_vector(args.mu0);
        if (mu0.size() != fit.order) throw ArgumentError("--mu0 needs one value per state");
        const MeanDecomposition dec = mean_decomposition(dyn, mu0, grid);
        write_curve_csv(grid,
                        {{"ic_component", dec.ic_component},
                         {"intercept_component", dec.intercept_component},
                         {"total", dec.total}},
                        out_path(out_dir, "mean_decomposition.csv").string());
    }
    std::cout << "basis outputs written to " << (out_dir.empty() ? "." : out_dir) << "\n";
    return kExitOk;
}

struct StudyArgs {
    std::string scenario;
    std::string spec_file;
    bool list = false;
    int replicates = 0;
    int size = 0;
    int iterations = -1;
    bool save_datasets = false;
};

int cmd_study(const StudyArgs& args, const std::string& out_dir) {
    if (args.list) {
        for (const auto& spec : catalog()) std::cout << spec.name << "\n";
        return kExitOk;
    }
    ScenarioSpec spec;
    if (!args.spec_file.empty()) {
        spec = read_scenario_json(args.spec_file);
    } else if (!args.scenario.empty()) {
        spec = find_scenario(args.scenario);
    } else {
        throw ArgumentError("study needs --scenario <name>, --spec <file> or --list");
    }
    if (args.replicates > 0) spec.replicates = args.replicates;
    if (args.size > 0) spec.n_per_dataset = args.size;
    if (args.iterations >= 0) spec.iterations = args.iterations;

    const StudyReport report = run_scenario(spec);
    const std::string dir = out_dir.empty() ? spec.name : out_dir;
    write_report(report, dir);
    if (args.save_datasets) {
        const fs::path data_dir = fs::path(dir) / "datasets";
        fs::create_directories(data_dir);
        const TimeGrid grid = spec.make_grid();
        InitialConditionSpec ics{spec.mu0, spec.sigma0};
        for (int r = 1; r <= spec.replicates; ++r) {
            char name[64];
            std::snprintf(name, sizeof(name), "replicate_%03d.csv", r);
            const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(r);
            if (spec.model == ScenarioModel::vdp) {
                write_coupled_csv(
                    simulate_vdp(VdpSpec{spec.mu, spec.kernel, ics, grid}, spec.n_per_dataset, seed),
                    (data_dir / name).string());
            } else {
                LinearDynamics dyn;
                dyn.grid = grid;
                dyn.betas.resize(spec.order, grid.points());
                for (int j = 0; j < spec.order; ++j)
                    for (int i = 0; i < grid.points(); ++i)
                        dyn.betas(j, i) = -spec.beta_true[static_cast<std::size_t>(j)].eval(grid[i]);
                Eigen::VectorXd alpha(grid.points());
                for (int i = 0; i < grid.points(); ++i) alpha[i] = spec.alpha_true.eval(grid[i]);
                dyn.intercept = std::move(alpha);
                write_curves_csv(simulate_linear(dyn, ics, spec.kernel, spec.n_per_dataset, seed),
                                 (data_dir / name).string());
            }
        }
    }
    std::cout << "scenario " << spec.name << ": R=" << report.replicates_requested
              << " failures=" << report.failures << " wall=" << report.wall_seconds << "s\n";
    for (const auto& coef : report.coefficients) {
        std::cout << "  " << coef.label << " mise:";
        for (double m : coef.mise) std::cout << ' ' << m;
        std::cout << "\n";
    }
    std::cout << "report in " << dir << "\n";
    return kExitOk;
}

struct StmArgs {
    std::string fit;
    std::vector<double> betas;
    int grid_points = 200;
    double t_max = 2.0 * M_PI;
    bool direct = false;
    std::string out;
};

int cmd_stm(const StmArgs& args, const std::string& out_dir) {
    LinearDynamics dyn;
    if (!args.fit.empty()) {
        dyn = dynamics_from_fit(read_fit_json(args.fit));
    } else {
        std::vector<double> betas = args.betas.empty() ? std::vector<double>{-1.0, 0.0} : args.betas;
        TimeGrid grid(0.0, args.t_max, args.grid_points);
        dyn.grid = grid;
        dyn.betas.resize(static_cast<int>(betas.size()), grid.points());
        for (std::size_t j = 0; j < betas.size(); ++j)
            dyn.betas.row(static_cast<int>(j)).setConstant(-betas[j]);
    }
    TransitionTableOptions opts;
    opts.direct = args.direct;
    const TransitionTable table = transition_table(dyn, opts);

    const fs::path path = args.out.empty() ? out_path(out_dir, "stm.csv") : fs::path(args.out);
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path.string() + "' for writing");
    file << "t,s,row,col,value\n";
    const int d = table.grid().points();
    const int m = table.order();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c)
                    file << format_double(table.grid()[i]) << ',' << format_double(table.grid()[j])
                         << ',' << r << ',' << c << ',' << format_double(table.entry(i, j)(r, c))
                         << "\n";
    std::cout << "transition table (" << d << "x" << d << " of " << m << "x" << m << ") -> "
              << path.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-varying linear ODE estimation from replicated functional data"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    int threads = 0;
    std::string out_dir;
    app.add_option("--seed", seed, "Base random seed");
    app.add_option("--threads", threads, "Worker threads (default: all, or PDA_KIT_THREADS)");
    app.add_option("--out-dir", out_dir, "Directory for outputs");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Generate a replicated dataset");
    simulate->add_option("--model", sim.model, "shm | linear | vdp")->required();
    simulate->add_option("--n", sim.n, "Number of replicate curves")->required();
    simulate->add_option("--grid", sim.grid_points, "Grid points");
    simulate->add_option("--tmax", sim.t_max, "Domain end (default: 2*pi, vdp: 13)");
    simulate->add_option("--sigma", sim.sigma, "Disturbance amplitude");
    simulate->add_option("--lengthscale", sim.lengthscale, "Disturbance lengthscale");
    simulate->add_option("--mu0", sim.mu0, "IC mean, comma separated")->delimiter(',');
    simulate->add_option("--sigma0", sim.sigma0, "IC covariance diagonal (or scalar)")
        ->delimiter(',');
    simulate->add_option("--betas", sim.betas, "Regression-form coefficients (linear model)")
        ->delimiter(',');
    simulate->add_option("--alpha", sim.alpha, "Constant intercept (linear model)");
    simulate->add_option("--mu", sim.mu, "Van der Pol non-linearity");
    simulate->add_option("--out", sim.out, "Output CSV path");

    FitArgs fit;
    auto* fitcmd = app.add_subcommand("fit", "Estimate the model with bias reduction");
    fitcmd->add_option("--data", fit.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    fitcmd->add_flag("--coupled", fit.coupled, "Coupled two-state dataset");
    fitcmd->add_option("--order", fit.order, "Model order (must match the dataset)");
    fitcmd->add_flag("--intercept", fit.intercept, "Include an intercept");
    fitcmd->add_option("--iterations", fit.iterations, "Bias-reduction iterations");
    fitcmd->add_option("--orders", fit.orders, "Included derivative orders")->delimiter(',');
    fitcmd->add_option("--post-smooth", fit.post_smooth, "Covariance smoothing penalty");
    fitcmd->add_flag("--truncate-cov", fit.truncate_cov, "99% eigen truncation of covariance");
    fitcmd->add_flag("--no-table-speedup", fit.no_speedup, "Direct per-pair propagator solves");
    fitcmd->add_flag("--early-stop", fit.early_stop,
                     "Stop when the relative coefficient change drops below 1e-4");
    fitcmd->add_flag("--include-covariance", fit.include_cov, "Embed covariances in the JSON");
    fitcmd->add_option("--out", fit.out, "Output JSON path");

    BasisArgs basis;
    auto* basiscmd = app.add_subcommand("basis", "Bases and covariance decomposition from a fit");
    basiscmd->add_option("--fit", basis.fit, "Fit JSON")->required()->check(CLI::ExistingFile);
    basiscmd->add_option("--sigma0", basis.sigma0, "IC covariance diagonal (or scalar)")
        ->delimiter(',');
    basiscmd->add_option("--kernel-sigma", basis.kernel_sigma, "Disturbance amplitude");
    basiscmd->add_option("--kernel-lengthscale", basis.kernel_lengthscale,
                         "Disturbance lengthscale");
    basiscmd->add_option("--eig-k", basis.eig_k, "Zero-state eigenfunctions to export");
    basiscmd->add_flag("--mean", basis.mean, "Also export the mean decomposition");
    basiscmd->add_option("--mu0", basis.mu0, "IC mean for the mean decomposition")->delimiter(',');

    StudyArgs study;
    auto* studycmd = app.add_subcommand("study", "Run a Monte Carlo scenario");
    studycmd->add_option("--scenario", study.scenario, "Catalog scenario name");
    studycmd->add_option("--spec", study.spec_file, "Scenario JSON file")->check(CLI::ExistingFile);
    studycmd->add_flag("--list", study.list, "List catalog scenarios");
    studycmd->add_option("--replicates", study.replicates, "Override replicate count");
    studycmd->add_option("--size", study.size, "Override dataset size N");
    studycmd->add_option("--iterations", study.iterations, "Override iteration count");
    studycmd->add_flag("--save-datasets", study.save_datasets,
                       "Also write every replicate dataset as CSV");

    StmArgs stm;
    auto* stmcmd = app.add_subcommand("stm", "Dump a propagator table (debug)");
    stmcmd->add_option("--fit", stm.fit, "Fit JSON for the dynamics")->check(CLI::ExistingFile);
    stmcmd->add_option("--betas", stm.betas, "Regression-form constant coefficients")
        ->delimiter(',');
    stmcmd->add_option("--grid", stm.grid_points, "Grid points");
    stmcmd->add_option("--tmax", stm.t_max, "Domain end");
    stmcmd->add_flag("--direct", stm.direct, "Force direct per-pair solving");
    stmcmd->add_option("--out", stm.out, "Output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitArgument;
    }

    pdakit::set_num_threads(threads);
    try {
        if (simulate->parsed()) return cmd_simulate(sim, seed, out_dir);
        if (fitcmd->parsed()) return cmd_fit(fit, out_dir);
        if (basiscmd->parsed()) return cmd_basis(basis, out_dir);
        if (studycmd->parsed()) return cmd_study(study, out_dir);
        if (stmcmd->parsed()) return cmd_stm(stm, out_dir);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
