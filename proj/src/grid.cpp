#include "pdakit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pdakit {

TimeGrid::TimeGrid(double start, double end, int points) : start_(start), end_(end) {
    if (points < 2) throw ArgumentError("TimeGrid needs at least 2 points");
    if (!(end > start)) throw ArgumentError("TimeGrid needs end > start");
    values_.resize(static_cast<std::size_t>(points));
    spacing_ = (end - start) / static_cast<double>(points - 1);
    for (int i = 0; i < points; ++i) values_[static_cast<std::size_t>(i)] = start + spacing_ * i;
    values_.front() = start;
    values_.back() = end;
}

void TimeGrid::require_contains(double t, const char* who) const {
    if (!contains(t))
        throw std::domain_error(std::string(who) + ": t = " + std::to_string(t) +
                                " outside grid range [" + std::to_string(start_) + ", " +
                                std::to_string(end_) + "]");
}

int TimeGrid::cell_index(double t) const {
    const int last_cell = points() - 2;
    int k = static_cast<int>((t - start_) / spacing_);
    k = std::clamp(k, 0, last_cell);
    // Guard against rounding in the division.
    while (k > 0 && t < values_[static_cast<std::size_t>(k)]) --k;
    while (k < last_cell && t > values_[static_cast<std::size_t>(k + 1)]) ++k;
    return k;
}

bool TimeGrid::same_as(const TimeGrid& other, double tol) const {
    return points() == other.points() && std::abs(start_ - other.start_) <= tol &&
           std::abs(end_ - other.end_) <= tol;
}

double interp1(const TimeGrid& grid, const Eigen::VectorXd& samples, double t) {
    if (samples.size() != grid.points()) throw ArgumentError("interp1: samples length != grid points");
    grid.require_contains(t, "interp1");
    const int k = grid.cell_index(t);
    const double t0 = grid[k], t1 = grid[k + 1];
    if (t == t0) return samples[k];
    if (t == t1) return samples[k + 1];
    const double w = (t - t0) / (t1 - t0);
    return samples[k] + w * (samples[k + 1] - samples[k]);
}

double interp2(const TimeGrid& grid_s, const TimeGrid& grid_t, const Eigen::MatrixXd& surface,
               double s, double t) {
    if (surface.rows() != grid_s.points() || surface.cols() != grid_t.points())
        throw ArgumentError("interp2: surface shape does not match grids");
    grid_s.require_contains(s, "interp2");
    grid_t.require_contains(t, "interp2");
    const int i = grid_s.cell_index(s);
    const int j = grid_t.cell_index(t);
    const double ws = (s - grid_s[i]) / (grid_s[i + 1] - grid_s[i]);
    const double wt = (t - grid_t[j]) / (grid_t[j + 1] - grid_t[j]);
    if (s == grid_s[i] && t == grid_t[j]) return surface(i, j);
    if (s == grid_s[i + 1] && t == grid_t[j]) return surface(i + 1, j);
    if (s == grid_s[i] && t == grid_t[j + 1]) return surface(i, j + 1);
    if (s == grid_s[i + 1] && t == grid_t[j + 1]) return surface(i + 1, j + 1);
    return (1 - ws) * (1 - wt) * surface(i, j) + ws * (1 - wt) * surface(i + 1, j) +
           (1 - ws) * wt * surface(i, j + 1) + ws * wt * surface(i + 1, j + 1);
}

namespace {

// Composite Simpson over the breakpoints {lower, interior grid nodes, upper},
// each segment split into `refine` sub-intervals. Value-type generic so the
// scalar and matrix integrators share one rule.
template <class Value, class Fn>
void simpson_accumulate(const TimeGrid& grid, Fn&& f, double lower, double upper, int refine,
                        Value& acc) {
    if (refine < 2 || refine % 2 != 0) throw ArgumentError("integrate: refine must be even and >= 2");
    grid.require_contains(lower, "integrate");
    grid.require_contains(upper, "integrate");
    if (lower > upper) throw ArgumentError("integrate: lower > upper");
    if (lower == upper) return;

    double a = lower;
    while (a < upper) {
        const int cell = grid.cell_index(a);
        double b = grid[cell + 1];
        if (b <= a) b = grid[std::min(cell + 2, grid.points() - 1)];
        b = std::min(b, upper);
        const double h = (b - a) / refine;
        Value seg = f(a) + f(b);
        for (int k = 1; k < refine; ++k) {
            const double w = (k % 2 == 1) ? 4.0 : 2.0;
            seg += w * f(a + h * k);
        }
        acc += (h / 3.0) * seg;
        a = b;
    }
}

}  // namespace

double integrate(const TimeGrid& grid, const std::function<double(double)>& f, double lower,
                 double upper, int refine) {
    double acc = 0.0;
    simpson_accumulate(grid, f, lower, upper, refine, acc);
    return acc;
}

Eigen::MatrixXd integrate_matrix(const TimeGrid& grid,
                                 const std::function<Eigen::MatrixXd(double)>& f, double lower,
                                 double upper, int rows, int cols, int refine) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
    simpson_accumulate(grid, f, lower, upper, refine, acc);
    return acc;
}

Eigen::VectorXd trapezoid_weights(const TimeGrid& grid) {
    const int d = grid.points();
    Eigen::VectorXd w = Eigen::VectorXd::Constant(d, grid.spacing());
    w[0] *= 0.5;
    w[d - 1] *= 0.5;
    return w;
}

Eigen::VectorXd prefix_weights(const TimeGrid& grid, int i_end) {
    if (i_end < 0 || i_end >= grid.points()) throw ArgumentError("prefix_weights: index out of range");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(i_end + 1);
    const double h = grid.spacing();
    const int n = i_end;  // interval count
    if (n == 0) return w;
    if (n == 1) {
        w[0] = w[1] = h / 2.0;
        return w;
    }
    int simpson_end = (n % 2 == 0) ? n : n - 3;
    if (simpson_end < 0) simpson_end = 0;  // n == 1 handled above, so this is n == 3 -> pure 3/8
    for (int k = 0; k + 2 <= simpson_end; k += 2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if (simpson_end != n) {
        // Closing Newton-Cotes 3/8 block over the last three intervals.
        w[n - 3] += 3.0 * h / 8.0;
        w[n - 2] += 9.0 * h / 8.0;
        w[n - 1] += 9.0 * h / 8.0;
        w[n] += 3.0 * h / 8.0;
    }
    return w;
}

}  // namespace pdakit
