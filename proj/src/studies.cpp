#include "pdakit/studies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pdakit/io.hpp"
#include "pdakit/parallel.hpp"

namespace pdakit {

void ScenarioSpec::validate() const {
    if (name.empty()) throw ArgumentError("ScenarioSpec: name must not be empty");
    kernel.validate();
    if (grid_points < 2) throw ArgumentError("ScenarioSpec: grid_points must be >= 2");
    if (t_end <= 0.0) throw ArgumentError("ScenarioSpec: t_end must be > 0");
    if (n_per_dataset < 2) throw ArgumentError("ScenarioSpec: n_per_dataset must be >= 2");
    if (replicates < 1) throw ArgumentError("ScenarioSpec: replicates must be >= 1");
    if (iterations < 0 || iterations > 100)
        throw ArgumentError("ScenarioSpec: iterations must be in [0, 100]");
    if (model == ScenarioModel::linear) {
        if (static_cast<int>(beta_true.size()) != order)
            throw ArgumentError("ScenarioSpec: one truth coefficient per derivative order");
        if (mu0.size() != order) throw ArgumentError("ScenarioSpec: mu0 dimension != order");
    } else {
        if (mu <= 0.0) throw ArgumentError("ScenarioSpec: mu must be > 0");
        if (mu0.size() != 2) throw ArgumentError("ScenarioSpec: vdp mu0 must be 2-dim");
    }
    if (sigma0.rows() != mu0.size() || sigma0.cols() != mu0.size())
        throw ArgumentError("ScenarioSpec: sigma0 shape must match mu0");
}

std::pair<double, double> mise(const std::vector<Eigen::VectorXd>& estimates,
                               const Eigen::VectorXd& truth, const TimeGrid& grid) {
    if (estimates.size() < 2) throw ArgumentError("mise: need at least 2 replicates");
    if (truth.size() != grid.points()) throw ArgumentError("mise: truth length != grid points");
    const Eigen::VectorXd w = trapezoid_weights(grid);
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& est : estimates) {
        if (est.size() != grid.points()) throw ArgumentError("mise: estimate length != grid points");
        const double ise = ((est - truth).array().square() * w.array()).sum();
        sum += ise;
        sum_sq += ise * ise;
    }
    const double r = static_cast<double>(estimates.size());
    const double mean = sum / r;
    const double var = std::max(0.0, (sum_sq - r * mean * mean) / (r - 1.0));
    return {mean, std::sqrt(var / r)};
}

BiasCurve bias_curve(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth) {
    if (estimates.size() < 2) throw ArgumentError("bias_curve: need at least 2 replicates");
    const auto d = truth.size();
    const double r = static_cast<double>(estimates.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& est : estimates) mean += est;
    mean /= r;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& est : estimates) var += (est - mean).array().square().matrix();
    var /= (r - 1.0);

    BiasCurve out;
    out.mean_bias = mean - truth;
    const Eigen::VectorXd half = 1.96 * (var / r).cwiseSqrt();
    out.lo = out.mean_bias - half;
    out.hi = out.mean_bias + half;
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> limit_cycle_reference(double mu, const TimeGrid& grid,
                                                                  int substeps) {
    if (mu <= 0.0) throw ArgumentError("limit_cycle_reference: mu must be > 0");
    auto rhs = [mu](double, const Eigen::VectorXd& z, Eigen::VectorXd& dz) {
        if (std::abs(z[0]) > 10.0) throw DivergenceError(0.0, "trajectory ran away (|x| > 10)");
        dz[0] = mu * (z[0] - z[0] * z[0] * z[0] / 3.0 - z[1]);
        dz[1] = z[0] / mu;
    };
    Eigen::VectorXd ic(2);
    ic << 1.99, -0.91;
    const Eigen::MatrixXd traj = solve_ivp(rhs, ic, grid, substeps);
    return {traj.col(0), traj.col(1)};
}

std::vector<std::pair<std::string, Eigen::VectorXd>> scenario_truth(const ScenarioSpec& spec,
                                                                    const TimeGrid& grid) {
    const int d = grid.points();
    std::vector<std::pair<std::string, Eigen::VectorXd>> out;
    if (spec.model == ScenarioModel::linear) {
        PdaConfig cfg;
        cfg.included_orders = spec.included_orders;
        const auto orders = cfg.orders_for(spec.order);
        if (spec.include_intercept) {
            Eigen::VectorXd a(d);
            for (int i = 0; i < d; ++i) a[i] = spec.alpha_true.eval(grid[i]);
            out.emplace_back("alpha", std::move(a));
        }
        for (int o : orders) {
            Eigen::VectorXd b(d);
            for (int i = 0; i < d; ++i) b[i] = spec.beta_true[static_cast<std::size_t>(o)].eval(grid[i]);
            out.emplace_back("beta" + std::to_string(o), std::move(b));
        }
        return out;
    }

    const auto [x0, y0] = limit_cycle_reference(spec.mu, grid);
    const double mu = spec.mu;
    Eigen::VectorXd alpha_x(d), beta_xx(d);
    for (int i = 0; i < d; ++i) {
        const double x = x0[i], y = y0[i];
        beta_xx[i] = mu * (1.0 - x * x);
        alpha_x[i] = mu * (x - x * x * x / 3.0 - y) - mu * (1.0 - x * x) * x + mu * y;
    }
    out.emplace_back("alpha_x", std::move(alpha_x));
    out.emplace_back("beta_xx", std::move(beta_xx));
    out.emplace_back("beta_xy", Eigen::VectorXd::Constant(d, -mu));
    out.emplace_back("alpha_y", Eigen::VectorXd::Zero(d));
    out.emplace_back("beta_yx", Eigen::VectorXd::Constant(d, 1.0 / mu));
    out.emplace_back("beta_yy", Eigen::VectorXd::Zero(d));
    return out;
}

namespace {

LinearDynamics scenario_dynamics(const ScenarioSpec& spec, const TimeGrid& grid) {
    LinearDynamics dyn;
    dyn.grid = grid;
    dyn.betas.resize(spec.order, grid.points());
    for (int j = 0; j < spec.order; ++j)
        for (int i = 0; i < grid.points(); ++i)
            dyn.betas(j, i) = -spec.beta_true[static_cast<std::size_t>(j)].eval(grid[i]);
    Eigen::VectorXd alpha(grid.points());
    for (int i = 0; i < grid.points(); ++i) alpha[i] = spec.alpha_true.eval(grid[i]);
    dyn.intercept = std::move(alpha);
    return dyn;
}

}  // namespace

StudyReport run_scenario(const ScenarioSpec& spec) {
    spec.validate();
    const TimeGrid grid = spec.make_grid();
    const auto truths = scenario_truth(spec, grid);
    const int n_coef = static_cast<int>(truths.size());
    const int n_iter = spec.iterations + 1;
    const int r_total = spec.replicates;

    PdaConfig config;
    config.include_intercept = spec.include_intercept || spec.model == ScenarioModel::vdp;
    config.iterations = spec.iterations;
    config.included_orders = spec.included_orders;

    InitialConditionSpec ics{spec.mu0, spec.sigma0};

    // estimates[r][coef][iter]
    std::vector<std::vector<std::vector<Eigen::VectorXd>>> estimates(
        static_cast<std::size_t>(r_total));
    std::vector<char> failed(static_cast<std::size_t>(r_total), 0);

    const auto t_start = std::chrono::steady_clock::now();
    parallel_for(0, r_total, [&](long r) {
        const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(r) + 1;
        auto& slot = estimates[static_cast<std::size_t>(r)];
        try {
            std::vector<const PdaFit*> fits;
            PdaFit single;
            CoupledPdaFit coupled;
            if (spec.model == ScenarioModel::linear) {
                const LinearDynamics dyn = scenario_dynamics(spec, grid);
                const CurveSet curves =
                    simulate_linear(dyn, ics, spec.kernel, spec.n_per_dataset, seed);
                single = bias_reduce(curves, config);
                fits = {&single};
            } else {
                VdpSpec vspec{spec.mu, spec.kernel, ics, grid};
                const CoupledCurveSet curves = simulate_vdp(vspec, spec.n_per_dataset, seed);
                coupled = bias_reduce_coupled(curves, config);
                fits = {&coupled.x, &coupled.y};
            }
            slot.assign(static_cast<std::size_t>(n_coef), {});
            int coef_base = 0;
            for (const PdaFit* fit : fits) {
                if (fit->failed || static_cast<int>(fit->history.size()) != n_iter)
                    throw NumericalError(fit->failure_message.empty() ? "fit incomplete"
                                                                      : fit->failure_message);
                const int p = static_cast<int>(fit->labels.size());
                for (int c = 0; c < p; ++c) {
                    auto& dest = slot[static_cast<std::size_t>(coef_base + c)];
                    dest.reserve(static_cast<std::size_t>(n_iter));
                    for (int it = 0; it < n_iter; ++it)
                        dest.push_back(fit->history[static_cast<std::size_t>(it)]
                                           .coefficients.row(c));
                }
                coef_base += p;
            }
        } catch (const std::exception&) {
            failed[static_cast<std::size_t>(r)] = 1;
            slot.clear();
        }
    });
    const auto t_stop = std::chrono::steady_clock::now();

    StudyReport report;
    report.scenario = spec.name;
    report.grid = grid;
    report.replicates_requested = r_total;
    report.failures = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
    report.wall_seconds = std::chrono::duration<double>(t_stop - t_start).count();

    if (report.failures * 10 > r_total)
        throw NumericalError("scenario '" + spec.name + "': " + std::to_string(report.failures) +
                             " of " + std::to_string(r_total) + " replicates failed");

    for (int c = 0; c < n_coef; ++c) {
        CoefficientReport coef;
        coef.label = truths[static_cast<std::size_t>(c)].first;
        for (int it = 0; it < n_iter; ++it) {
            std::vector<Eigen::VectorXd> collected;
            collected.reserve(static_cast<std::size_t>(r_total));
            for (int r = 0; r < r_total; ++r) {
                if (failed[static_cast<std::size_t>(r)]) continue;
                collected.push_back(
                    estimates[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                             [static_cast<std::size_t>(it)]);
            }
            const auto [m, s] = mise(collected, truths[static_cast<std::size_t>(c)].second, grid);
            coef.mise.push_back(m);
            coef.se.push_back(s);
            coef.bias.push_back(bias_curve(collected, truths[static_cast<std::size_t>(c)].second));
        }
        report.coefficients.push_back(std::move(coef));
    }
    return report;
}

namespace {

ScenarioSpec shm_single(const std::string& name, std::uint64_t seed) {
    ScenarioSpec s;
    s.name = name;
    s.model = ScenarioModel::linear;
    s.order = 2;
    s.beta_true = {CoefficientSpec{CoefficientSpec::Kind::constant, -1.0, 0.0},
                   CoefficientSpec{CoefficientSpec::Kind::constant, 0.0, 0.0}};
    s.include_intercept = false;
    s.included_orders = {0};
    s.kernel = KernelSpec{0.25, 2.0};
    s.mu0 = Eigen::VectorXd::Zero(2);
    s.sigma0 = 0.05 * Eigen::MatrixXd::Identity(2, 2);
    s.t_end = 2.0 * M_PI;
    s.grid_points = 200;
    s.n_per_dataset = 500;
    s.replicates = 200;
    s.iterations = 3;
    s.base_seed = seed;
    return s;
}

ScenarioSpec shm_full(const std::string& name, std::uint64_t seed) {
    ScenarioSpec s = shm_single(name, seed);
    s.include_intercept = true;
    s.included_orders = {0, 1};
    s.kernel = KernelSpec{0.4, 1.0};
    s.t_end = 4.0 * M_PI;
    s.n_per_dataset = 200;
    s.replicates = 50;
    s.iterations = 10;
    return s;
}

ScenarioSpec vdp_base(const std::string& name, double mu, std::uint64_t seed) {
    ScenarioSpec s;
    s.name = name;
    s.model = ScenarioModel::vdp;
    s.mu = mu;
    s.include_intercept = true;
    s.kernel = KernelSpec{0.1, 2.0};
    s.mu0 = Eigen::Vector2d(1.99, -0.91);
    s.sigma0 = 0.05 * Eigen::MatrixXd::Identity(2, 2);
    s.t_end = 13.0;
    s.grid_points = 200;
    s.n_per_dataset = 200;
    s.replicates = 50;
    s.iterations = 10;
    s.base_seed = seed;
    return s;
}

}  // namespace

std::vector<ScenarioSpec> catalog() {
    std::vector<ScenarioSpec> out;
    out.push_back(shm_single("shm-baseline", 90101));

    ScenarioSpec s = shm_single("shm-ic-a", 90201);
    s.mu0 << 1.0, 0.0;
    out.push_back(s);
    s = shm_single("shm-ic-b", 90301);
    s.mu0 << 0.0, 1.0;
    out.push_back(s);

    s = shm_single("shm-lengthscale-a", 90401);
    s.kernel.lengthscale = 1.0;
    out.push_back(s);
    s = shm_single("shm-lengthscale-b", 90501);
    s.kernel.lengthscale = 3.0;
    out.push_back(s);

    s = shm_single("shm-amplitude-a", 90601);
    s.kernel.sigma = 0.15;
    out.push_back(s);
    s = shm_single("shm-amplitude-b", 90701);
    s.kernel.sigma = 0.4;
    out.push_back(s);

    s = shm_full("shm-full", 90801);
    s.mu0 << 0.0, 2.0;
    out.push_back(s);

    s = shm_full("dhm", 90901);
    s.beta_true[1] = CoefficientSpec{CoefficientSpec::Kind::constant, -0.1, 0.0};
    s.mu0 << 1.0, 0.0;
    out.push_back(s);

    s = shm_full("dhm-tv", 91001);
    s.beta_true[1] = CoefficientSpec{CoefficientSpec::Kind::quadratic, 0.01, 2.0 * M_PI};
    s.mu0 << 1.0, 0.0;
    out.push_back(s);

    out.push_back(vdp_base("vdp-mu-0.5", 0.5, 91101));
    out.push_back(vdp_base("vdp-mu-1", 1.0, 91201));
    out.push_back(vdp_base("vdp-mu-2", 2.0, 91301));

    s = vdp_base("vdp-sigma-0.2", 1.0, 91401);
    s.kernel.sigma = 0.2;
    out.push_back(s);
    s = vdp_base("vdp-sigma-0.4", 1.0, 91501);
    s.kernel.sigma = 0.4;
    out.push_back(s);

    s = vdp_base("vdp-l-1", 1.0, 91601);
    s.kernel.lengthscale = 1.0;
    out.push_back(s);
    s = vdp_base("vdp-l-3", 1.0, 91701);
    s.kernel.lengthscale = 3.0;
    out.push_back(s);
    return out;
}

ScenarioSpec find_scenario(const std::string& name) {
    for (auto& spec : catalog())
        if (spec.name == name) return spec;
    std::string names;
    for (const auto& spec : catalog()) names += "\n  " + spec.name;
    throw ArgumentError("unknown scenario '" + name + "'; available:" + names);
}

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

json coefspec_to_json(const CoefficientSpec& c) {
    return json{{"kind", c.kind == CoefficientSpec::Kind::constant ? "constant" : "quadratic"},
                {"value", c.value},
                {"center", c.center}};
}

CoefficientSpec coefspec_from_json(const json& j) {
    CoefficientSpec c;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant")
        c.kind = CoefficientSpec::Kind::constant;
    else if (kind == "quadratic")
        c.kind = CoefficientSpec::Kind::quadratic;
    else
        throw IoError("unknown coefficient kind '" + kind + "'");
    c.value = j.at("value").get<double>();
    c.center = j.value("center", 0.0);
    return c;
}

}  // namespace

void write_report(const StudyReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);

    json coeffs = json::array();
    for (const auto& coef : report.coefficients) {
        json bias = json::array();
        for (std::size_t it = 0; it < coef.bias.size(); ++it) {
            bias.push_back(json{{"iteration", it},
                                {"mean", vector_to_json(coef.bias[it].mean_bias)},
                                {"lo", vector_to_json(coef.bias[it].lo)},
                                {"hi", vector_to_json(coef.bias[it].hi)}});
        }
        coeffs.push_back(json{{"label", coef.label},
                              {"mise", coef.mise},
                              {"se", coef.se},
                              {"bias", std::move(bias)}});
    }
    json j{{"scenario", report.scenario},
           {"grid",
            {{"start", report.grid.start()},
             {"end", report.grid.end()},
             {"points", report.grid.points()}}},
           {"replicates", report.replicates_requested},
           {"failures", report.failures},
           {"wall_seconds", report.wall_seconds},
           {"coefficients", std::move(coeffs)}};

    const auto report_path = fs::path(dir) / "report.json";
    std::ofstream jf(report_path, std::ios::binary);
    if (!jf) throw IoError("cannot open '" + report_path.string() + "' for writing");
    jf << j.dump(1) << "\n";

    const auto mise_path = fs::path(dir) / "mise.csv";
    std::ofstream mf(mise_path, std::ios::binary);
    if (!mf) throw IoError("cannot open '" + mise_path.string() + "' for writing");
    mf << "scenario,coefficient,iteration,mise,se\n";
    for (const auto& coef : report.coefficients)
        for (std::size_t it = 0; it < coef.mise.size(); ++it)
            mf << report.scenario << ',' << coef.label << ',' << it << ','
               << format_double(coef.mise[it]) << ',' << format_double(coef.se[it]) << "\n";

    const auto bias_path = fs::path(dir) / "bias.csv";
    std::ofstream bf(bias_path, std::ios::binary);
    if (!bf) throw IoError("cannot open '" + bias_path.string() + "' for writing");
    bf << "scenario,coefficient,iteration,t,mean_bias,lo,hi\n";
    for (const auto& coef : report.coefficients) {
        for (std::size_t it = 0; it < coef.bias.size(); ++it) {
            const auto& b = coef.bias[it];
            for (int k = 0; k < report.grid.points(); ++k)
                bf << report.scenario << ',' << coef.label << ',' << it << ','
                   << format_double(report.grid[k]) << ',' << format_double(b.mean_bias[k]) << ','
                   << format_double(b.lo[k]) << ',' << format_double(b.hi[k]) << "\n";
        }
    }
}

void write_scenario_json(const ScenarioSpec& spec, const std::string& path) {
    json betas = json::array();
    for (const auto& b : spec.beta_true) betas.push_back(coefspec_to_json(b));
    json sigma0 = json::array();
    for (Eigen::Index r = 0; r < spec.sigma0.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < spec.sigma0.cols(); ++c) row.push_back(spec.sigma0(r, c));
        sigma0.push_back(std::move(row));
    }
    json j{{"name", spec.name},
           {"model", spec.model == ScenarioModel::linear ? "linear" : "vdp"},
           {"order", spec.order},
           {"beta_true", std::move(betas)},
           {"alpha_true", coefspec_to_json(spec.alpha_true)},
           {"include_intercept", spec.include_intercept},
           {"included_orders", spec.included_orders},
           {"mu", spec.mu},
           {"kernel", {{"sigma", spec.kernel.sigma}, {"lengthscale", spec.kernel.lengthscale}}},
           {"mu0", vector_to_json(spec.mu0)},
           {"sigma0", std::move(sigma0)},
           {"t_end", spec.t_end},
           {"grid_points", spec.grid_points},
           {"n_per_dataset", spec.n_per_dataset},
           {"replicates", spec.replicates},
           {"iterations", spec.iterations},
           {"base_seed", spec.base_seed}};
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open '" + path + "' for writing");
    file << j.dump(1) << "\n";
}

ScenarioSpec read_scenario_json(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw IoError("cannot open '" + path + "' for reading");
    json j;
    try {
        file >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
    ScenarioSpec spec;
    spec.name = j.at("name").get<std::string>();
    const std::string model = j.at("model").get<std::string>();
    if (model == "linear")
        spec.model = ScenarioModel::linear;
    else if (model == "vdp")
        spec.model = ScenarioModel::vdp;
    else
        throw IoError("unknown model '" + model + "' in " + path);
    spec.order = j.value("order", 2);
    spec.beta_true.clear();
    if (j.contains("beta_true"))
        for (const auto& b : j.at("beta_true")) spec.beta_true.push_back(coefspec_from_json(b));
    if (j.contains("alpha_true")) spec.alpha_true = coefspec_from_json(j.at("alpha_true"));
    spec.include_intercept = j.value("include_intercept", false);
    spec.included_orders = j.value("included_orders", std::vector<int>{});
    spec.mu = j.value("mu", 1.0);
    if (j.contains("kernel")) {
        spec.kernel.sigma = j.at("kernel").at("sigma").get<double>();
        spec.kernel.lengthscale = j.at("kernel").at("lengthscale").get<double>();
    }
    const auto mu0 = j.at("mu0").get<std::vector<double>>();
    spec.mu0 = Eigen::Map<const Eigen::VectorXd>(mu0.data(), static_cast<Eigen::Index>(mu0.size()));
    const auto& s0 = j.at("sigma0");
    spec.sigma0.resize(static_cast<Eigen::Index>(s0.size()), static_cast<Eigen::Index>(s0.size()));
    for (std::size_t r = 0; r < s0.size(); ++r)
        for (std::size_t c = 0; c < s0[r].size(); ++c)
            spec.sigma0(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                s0[r][c].get<double>();
    spec.t_end = j.at("t_end").get<double>();
    spec.grid_points = j.at("grid_points").get<int>();
    spec.n_per_dataset = j.at("n_per_dataset").get<int>();
    spec.replicates = j.at("replicates").get<int>();
    spec.iterations = j.at("iterations").get<int>();
    spec.base_seed = j.value("base_seed", 0ULL);
    spec.validate();
    return spec;
}

}  // namespace pdakit
