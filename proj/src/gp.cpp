#include "pdakit/gp.hpp"

#include <cmath>

#include "pdakit/rng.hpp"

namespace pdakit {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;  // 1/sqrt(2*pi)

double normal_density(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
}  // namespace

void KernelSpec::validate() const {
    if (sigma < 0.0) throw ArgumentError("KernelSpec: sigma must be >= 0");
    if (lengthscale <= 0.0) throw ArgumentError("KernelSpec: lengthscale must be > 0");
}

double kernel_eval(const KernelSpec& spec, double s, double t) {
    spec.validate();
    return spec.sigma * spec.sigma * normal_density(spec.lengthscale * std::abs(t - s));
}

double CovarianceGrid::max_asymmetry() const {
    return (surface - surface.transpose()).cwiseAbs().maxCoeff();
}

void CovarianceGrid::symmetrize() { surface = 0.5 * (surface + surface.transpose()).eval(); }

CovarianceGrid kernel_covariance(const KernelSpec& spec, const TimeGrid& grid) {
    spec.validate();
    const int d = grid.points();
    const double s2 = spec.sigma * spec.sigma;
    Eigen::MatrixXd k(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = s2 * normal_density(spec.lengthscale * (grid[i] - grid[j]));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return CovarianceGrid{grid, std::move(k)};
}

GpSampler::GpSampler(const KernelSpec& spec, const TimeGrid& grid) : points_(grid.points()) {
    spec.validate();
    if (spec.sigma == 0.0) {
        zero_ = true;
        return;
    }
    const Eigen::MatrixXd k = kernel_covariance(spec, grid).surface;
    const double var = spec.sigma * spec.sigma * kInvSqrt2Pi;  // C(t, t)
    double jitter = 1e-10 * var;
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (int attempt = 0; attempt <= 5; ++attempt) {
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += jitter;
        llt.compute(kj);
        if (llt.info() == Eigen::Success) {
            chol_ = llt.matrixL();
            return;
        }
        jitter *= 10.0;
    }
    throw NumericalError("sample_gp: Cholesky failed after jitter escalation");
}

Eigen::VectorXd GpSampler::draw(Rng& rng) const {
    if (zero_) return Eigen::VectorXd::Zero(points_);
    Eigen::VectorXd z(points_);
    for (int r = 0; r < points_; ++r) z[r] = rng.normal();
    return chol_.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd sample_gp(const KernelSpec& spec, const TimeGrid& grid, int n, std::uint64_t seed) {
    if (n < 1) throw ArgumentError("sample_gp: n must be >= 1");
    const GpSampler sampler(spec, grid);
    Rng rng(seed);
    Eigen::MatrixXd out(n, grid.points());
    for (int i = 0; i < n; ++i) out.row(i) = sampler.draw(rng);
    return out;
}

CovarianceGrid empirical_cov(const Eigen::MatrixXd& residuals, const TimeGrid& grid) {
    const auto n = residuals.rows();
    if (n < 2) throw ArgumentError("empirical_cov: need at least 2 residual curves");
    if (residuals.cols() != grid.points())
        throw ArgumentError("empirical_cov: residual length != grid points");
    Eigen::MatrixXd surface =
        (residuals.transpose() * residuals) / static_cast<double>(n - 1);
    return CovarianceGrid{grid, std::move(surface)};
}

EigenPairs eigenfunctions(const CovarianceGrid& cov, int k) {
    const int d = cov.grid.points();
    if (k < 1 || k > d) throw ArgumentError("eigenfunctions: k out of range");
    const Eigen::VectorXd w = trapezoid_weights(cov.grid);
    const Eigen::VectorXd ws = w.array().sqrt();
    Eigen::MatrixXd a = ws.asDiagonal() * cov.surface * ws.asDiagonal();
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("eigenfunctions: solver failed");

    EigenPairs out;
    out.values.resize(k);
    out.functions.resize(k, d);
    const Eigen::VectorXd inv_ws = ws.cwiseInverse();
    for (int r = 0; r < k; ++r) {
        const int src = d - 1 - r;  // solver sorts ascending
        out.values[r] = solver.eigenvalues()[src];
        Eigen::VectorXd f = inv_ws.cwiseProduct(solver.eigenvectors().col(src));
        int arg_max = 0;
        f.cwiseAbs().maxCoeff(&arg_max);
        if (f[arg_max] < 0.0) f = -f;
        out.functions.row(r) = f;
    }
    return out;
}

CovarianceGrid truncate_covariance(const CovarianceGrid& cov, double fraction) {
    const int d = cov.grid.points();
    EigenPairs pairs = eigenfunctions(cov, d);
    double total = 0.0;
    for (int i = 0; i < d; ++i) total += std::max(pairs.values[i], 0.0);
    CovarianceGrid out{cov.grid, Eigen::MatrixXd::Zero(d, d)};
    if (total <= 0.0) return out;
    double kept = 0.0;
    for (int i = 0; i < d; ++i) {
        if (pairs.values[i] <= 0.0) break;
        out.surface.noalias() +=
            pairs.values[i] * pairs.functions.row(i).transpose() * pairs.functions.row(i);
        kept += pairs.values[i];
        if (kept / total >= fraction) break;
    }
    return out;
}

}  // namespace pdakit
