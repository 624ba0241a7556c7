#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "pdakit/errors.hpp"

namespace pdakit {

// Discretisation of [start, end] shared by curves, covariance surfaces and
// transition tables. Construction always produces a uniform grid; the class
// still stores explicit node values so lookups stay exact at nodes.
class TimeGrid {
  public:
    TimeGrid() = default;
    TimeGrid(double start, double end, int points);

    double start() const { return start_; }
    double end() const { return end_; }
    int points() const { return static_cast<int>(values_.size()); }
    double spacing() const { return spacing_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }

    bool contains(double t) const { return t >= start_ && t <= end_; }
    void require_contains(double t, const char* who) const;

    // Index of the cell [values[k], values[k+1]] containing t; exact at nodes.
    int cell_index(double t) const;

    bool same_as(const TimeGrid& other, double tol = 1e-12) const;

  private:
    double start_ = 0.0;
    double end_ = 1.0;
    double spacing_ = 1.0;
    std::vector<double> values_;
};

// Piecewise-linear interpolation; exact at nodes, no extrapolation.
double interp1(const TimeGrid& grid, const Eigen::VectorXd& samples, double t);

// Bilinear interpolation of a surface sampled on gridS x gridT.
double interp2(const TimeGrid& grid_s, const TimeGrid& grid_t, const Eigen::MatrixXd& surface,
               double s, double t);

// Composite Simpson over [lower, upper], subdividing each overlapped grid
// cell into `refine` sub-intervals (refine must be even). The breakpoints are
// the grid nodes, so the rule is additive over adjacent intervals and exact
// for cubics.
double integrate(const TimeGrid& grid, const std::function<double(double)>& f, double lower,
                 double upper, int refine = 4);

// Same rule for a matrix-valued integrand (entrywise).
Eigen::MatrixXd integrate_matrix(const TimeGrid& grid,
                                 const std::function<Eigen::MatrixXd(double)>& f, double lower,
                                 double upper, int rows, int cols, int refine = 4);

// Trapezoid quadrature weights over all grid nodes. This is the rule used for
// integrals of sampled data (inner products, ISE, eigenproblems).
Eigen::VectorXd trapezoid_weights(const TimeGrid& grid);

// Quadrature weights over nodes 0..i_end for the prefix integral from
// grid.start() to grid[i_end], on the native grid without refinement.
// Composite Simpson where the interval count allows it, with a 3/8 block or
// trapezoid closing rule for odd/short prefixes.
Eigen::VectorXd prefix_weights(const TimeGrid& grid, int i_end);

}  // namespace pdakit
