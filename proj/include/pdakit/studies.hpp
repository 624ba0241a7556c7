#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdakit/pda.hpp"

namespace pdakit {

enum class ScenarioModel { linear, vdp };

// Coefficient function descriptor in the regression convention
// (D^m x = alpha + sum_o b_o D^o x + eps).
struct CoefficientSpec {
    enum class Kind { constant, quadratic } kind = Kind::constant;
    double value = 0.0;   // the constant, or the quadratic multiplier
    double center = 0.0;  // quadratic: value * (t - center)^2

    double eval(double t) const {
        return kind == Kind::constant ? value : value * (t - center) * (t - center);
    }
};

struct ScenarioSpec {
    std::string name;
    ScenarioModel model = ScenarioModel::linear;

    // linear-model truth
    int order = 2;
    std::vector<CoefficientSpec> beta_true;  // per derivative order 0..m-1
    CoefficientSpec alpha_true;

    // fitted model
    bool include_intercept = false;
    std::vector<int> included_orders;  // empty = all

    // vdp truth
    double mu = 1.0;

    KernelSpec kernel;
    Eigen::VectorXd mu0;
    Eigen::MatrixXd sigma0;
    double t_end = 2.0 * M_PI;
    int grid_points = 200;
    int n_per_dataset = 500;
    int replicates = 200;
    int iterations = 3;
    std::uint64_t base_seed = 0;

    TimeGrid make_grid() const { return TimeGrid(0.0, t_end, grid_points); }
    void validate() const;
};

struct BiasCurve {
    Eigen::VectorXd mean_bias;  // mean estimate minus truth, per node
    Eigen::VectorXd lo, hi;     // 95% pointwise Monte Carlo band around the mean bias
};

struct CoefficientReport {
    std::string label;
    std::vector<double> mise;     // per iteration 0..J
    std::vector<double> se;       // Monte Carlo standard errors
    std::vector<BiasCurve> bias;  // per iteration
};

struct StudyReport {
    std::string scenario;
    TimeGrid grid;
    std::vector<CoefficientReport> coefficients;
    int replicates_requested = 0;
    int failures = 0;
    double wall_seconds = 0.0;
};

// Mean integrated squared error over replicates with its Monte Carlo standard
// error; the integral uses the grid quadrature weights.
std::pair<double, double> mise(const std::vector<Eigen::VectorXd>& estimates,
                               const Eigen::VectorXd& truth, const TimeGrid& grid);

BiasCurve bias_curve(const std::vector<Eigen::VectorXd>& estimates, const Eigen::VectorXd& truth);

// Deterministic trajectory from the near-limit-cycle start (1.99, -0.91); the
// reference operating trajectory for the time-varying Van der Pol truths.
std::pair<Eigen::VectorXd, Eigen::VectorXd> limit_cycle_reference(double mu, const TimeGrid& grid,
                                                                  int substeps = 10);

// Truth curves in fit-label order for the scenario's estimated coefficients.
std::vector<std::pair<std::string, Eigen::VectorXd>> scenario_truth(const ScenarioSpec& spec,
                                                                    const TimeGrid& grid);

// Runs R replicate datasets (seed = base_seed + replicate index, 1-based),
// fits each, and aggregates per-iteration MISE and bias curves. Individual
// replicate failures are counted, not fatal; more than 10% failing raises a
// NumericalError.
StudyReport run_scenario(const ScenarioSpec& spec);

std::vector<ScenarioSpec> catalog();
ScenarioSpec find_scenario(const std::string& name);

// report.json + mise.csv + bias.csv under the given directory.
void write_report(const StudyReport& report, const std::string& dir);

ScenarioSpec read_scenario_json(const std::string& path);
void write_scenario_json(const ScenarioSpec& spec, const std::string& path);

}  // namespace pdakit
