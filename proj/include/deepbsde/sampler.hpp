#pragma once

// Brownian increments, the Euler-Maruyama step and multilevel step schedules.

#include "deepbsde/problems.hpp"

#include <cstdint>
#include <vector>

namespace deepbsde {

struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, int N);

    double dt() const { return horizon / steps; }
    double time(int n) const { return n * horizon / steps; }
};

/// M paths of N Gaussian increments in R^d. increments[n] is d x M;
/// column m depends only on (seed, m).
struct PathBatch {
    TimeGrid grid;
    int dim = 1;
    int paths = 1;
    std::uint64_t seed = 0;
    std::vector<Matrix> increments;

    /// Sum of all increments of each path (d x M): the terminal Brownian value.
    Matrix terminal_value() const;
};

/// Stream seed for path m of a batch drawn with `seed` (splitmix64 mixing).
std::uint64_t path_stream_seed(std::uint64_t seed, std::uint64_t path);

PathBatch sample_increments(std::uint64_t seed, int paths, const TimeGrid& grid, int dim);

/// Sums each run of `factor` consecutive increments into one coarse increment.
PathBatch coarsen_increments(const PathBatch& fine, int factor);

/// Restricts a batch to paths [first, first + count).
PathBatch slice_paths(const PathBatch& batch, int first, int count);

struct EulerStep {
    Vector x_next;
    double y_drift_incr = 0.0;  // phi dt
    double y_diff_incr = 0.0;   // z^T sigma dW
};

EulerStep euler_step(double t, const Vector& x, double y, const Vector& z, double dt, const Vector& dW,
                     const FBSDEProblem& problem);

/// Exact geometric Brownian motion states X_0..X_N (each d x M) driven by `batch`.
std::vector<Matrix> gbm_exact_path(const Vector& x0, double mu, double sigma, const PathBatch& batch);

/// Euler-Maruyama states for dX = mu X dt + sigma X dW on the same increments.
std::vector<Matrix> gbm_euler_path(const Vector& x0, double mu, double sigma, const PathBatch& batch);

struct ConvergenceRow {
    int steps = 0;
    double rms_error = 0.0;
    double ratio = 0.0;  // rms_error(previous N) / rms_error(N); 0 for the first row
};

struct ConvergenceStudy {
    double mu = 0.05;
    double sigma = 0.2;
    double horizon = 1.0;
    double x0 = 1.0;
    int paths = 4096;
    std::vector<int> steps{8, 16, 32, 64};
    std::uint64_t seed = 0;
};

/// Root-mean-square terminal error of Euler vs the exact GBM solution. All
/// grids are coarsenings of one path set sampled on the finest grid.
std::vector<ConvergenceRow> strong_convergence(const ConvergenceStudy& study);

struct LevelSchedule {
    std::vector<int> steps_per_level{2, 4, 8, 16, 32};
    std::vector<int> iterations_per_level;
    double level_factor = 2.0;  // M in h_l = h0 M^-l
    double h0 = 0.5;

    std::size_t levels() const { return steps_per_level.size(); }
    int total_iterations() const;
    /// Throws std::invalid_argument on a malformed schedule.
    void validate() const;
};

/// Levels with h_l = h0 factor^-l, l = 0..levels-1, on horizon T.
LevelSchedule geometric_schedule(double T, double h0, double factor, int levels, int iterations_per_level);

/// Default: h0 = T/2, factor 2, five levels -> {2, 4, 8, 16, 32} steps.
LevelSchedule default_schedule(double T, int iterations_per_level);

}  // namespace deepbsde
