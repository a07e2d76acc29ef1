#include "deepbsde/sampler.hpp"

#include "deepbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace deepbsde {

TimeGrid::TimeGrid(double T, int N) : horizon(T), steps(N) {
    if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be > 0");
    if (N < 1) throw std::invalid_argument("TimeGrid: need at least one step");
}

Matrix PathBatch::terminal_value() const {
    Matrix total = Matrix::Zero(dim, paths);
    for (const Matrix& inc : increments) total += inc;
    return total;
}

std::uint64_t path_stream_seed(std::uint64_t seed, std::uint64_t path) {
    auto splitmix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return splitmix(splitmix(seed) ^ (path + 0x632be59bd9b4e019ULL));
}

PathBatch sample_increments(std::uint64_t seed, int paths, const TimeGrid& grid, int dim) {
    if (paths < 1) throw std::invalid_argument("sample_increments: need at least one path");
    if (dim < 1) throw std::invalid_argument("sample_increments: dimension must be >= 1");

    PathBatch b;
    b.grid = grid;
    b.dim = dim;
    b.paths = paths;
    b.seed = seed;
    b.increments.assign(static_cast<std::size_t>(grid.steps), Matrix(dim, paths));

    const double scale = std::sqrt(grid.dt());
    for (int m = 0; m < paths; ++m) {
        std::mt19937_64 rng(path_stream_seed(seed, static_cast<std::uint64_t>(m)));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& inc : b.increments)
            for (int i = 0; i < dim; ++i) inc(i, m) = scale * normal(rng);
    }
    return b;
}

PathBatch coarsen_increments(const PathBatch& fine, int factor) {
    if (factor < 1 || fine.grid.steps % factor != 0)
        throw std::invalid_argument("coarsen_increments: factor " + std::to_string(factor) +
                                    " does not divide N = " + std::to_string(fine.grid.steps));
    PathBatch coarse;
    coarse.grid = TimeGrid(fine.grid.horizon, fine.grid.steps / factor);
    coarse.dim = fine.dim;
    coarse.paths = fine.paths;
    coarse.seed = fine.seed;
    coarse.increments.reserve(static_cast<std::size_t>(coarse.grid.steps));
    for (int n = 0; n < coarse.grid.steps; ++n) {
        Matrix block = fine.increments[static_cast<std::size_t>(n * factor)];
        for (int j = 1; j < factor; ++j) block += fine.increments[static_cast<std::size_t>(n * factor + j)];
        coarse.increments.push_back(std::move(block));
    }
    return coarse;
}

PathBatch slice_paths(const PathBatch& batch, int first, int count) {
    if (first < 0 || count < 1 || first + count > batch.paths)
        throw std::invalid_argument("slice_paths: range out of bounds");
    PathBatch out;
    out.grid = batch.grid;
    out.dim = batch.dim;
    out.paths = count;
    out.seed = batch.seed;
    out.increments.reserve(batch.increments.size());
    for (const Matrix& inc : batch.increments) out.increments.push_back(inc.middleCols(first, count));
    return out;
}

EulerStep euler_step(double t, const Vector& x, double y, const Vector& z, double dt, const Vector& dW,
                     const FBSDEProblem& problem) {
    if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be > 0");
    const Vector drift = problem.mu(t, x, y, z);
    if (!drift.allFinite()) throw NumericalError("euler_step: drift mu returned a non-finite value");
    const Vector noise = problem.sigma_times(t, x, y, dW);
    if (!noise.allFinite()) throw NumericalError("euler_step: diffusion sigma returned a non-finite value");
    const double phi = problem.phi(t, x, y, z);
    if (!std::isfinite(phi)) throw NumericalError("euler_step: driver phi returned a non-finite value");

    EulerStep s;
    s.x_next = x + drift * dt + noise;
    s.y_drift_incr = phi * dt;
    s.y_diff_incr = z.dot(noise);
    return s;
}

std::vector<Matrix> gbm_exact_path(const Vector& x0, double mu, double sigma, const PathBatch& batch) {
    if ((x0.array() <= 0.0).any()) throw std::invalid_argument("gbm_exact_path: x0 must be positive");
    const double dt = batch.grid.dt();
    const double drift = (mu - 0.5 * sigma * sigma) * dt;
    std::vector<Matrix> states;
    states.reserve(batch.increments.size() + 1);
    states.push_back(x0.replicate(1, batch.paths));
    for (const Matrix& dW : batch.increments) {
        const Matrix& x = states.back();
        states.push_back(x.cwiseProduct(((drift + sigma * dW.array()).exp()).matrix()));
    }
    return states;
}

std::vector<Matrix> gbm_euler_path(const Vector& x0, double mu, double sigma, const PathBatch& batch) {
    const double dt = batch.grid.dt();
    std::vector<Matrix> states;
    states.reserve(batch.increments.size() + 1);
    states.push_back(x0.replicate(1, batch.paths));
    for (const Matrix& dW : batch.increments) {
        const Matrix& x = states.back();
        states.push_back(x + mu * dt * x + sigma * x.cwiseProduct(dW));
    }
    return states;
}

std::vector<ConvergenceRow> strong_convergence(const ConvergenceStudy& study) {
    if (study.steps.empty()) throw std::invalid_argument("strong_convergence: no step counts");
    const int finest = *std::max_element(study.steps.begin(), study.steps.end());
    for (int n : study.steps)
        if (n < 1 || finest % n != 0)
            throw std::invalid_argument("strong_convergence: step count " + std::to_string(n) +
                                        " does not divide the finest grid " + std::to_string(finest));

    const PathBatch fine = sample_increments(study.seed, study.paths, TimeGrid(study.horizon, finest), 1);
    const Vector x0 = Vector::Constant(1, study.x0);

    std::vector<ConvergenceRow> rows;
    for (int n : study.steps) {
        const PathBatch batch = coarsen_increments(fine, finest / n);
        const Matrix exact = gbm_exact_path(x0, study.mu, study.sigma, batch).back();
        const Matrix euler = gbm_euler_path(x0, study.mu, study.sigma, batch).back();
        ConvergenceRow row;
        row.steps = n;
        row.rms_error = std::sqrt((euler - exact).squaredNorm() / static_cast<double>(study.paths));
        if (!rows.empty()) row.ratio = rows.back().rms_error / row.rms_error;
        rows.push_back(row);
    }
    return rows;
}

int LevelSchedule::total_iterations() const {
    int total = 0;
    for (int it : iterations_per_level) total += it;
    return total;
}

void LevelSchedule::validate() const {
    if (steps_per_level.empty()) throw std::invalid_argument("schedule: at least one level is required");
    if (iterations_per_level.size() != steps_per_level.size())
        throw std::invalid_argument("schedule: " + std::to_string(iterations_per_level.size()) +
                                    " iteration counts for " + std::to_string(steps_per_level.size()) +
                                    " levels");
    for (std::size_t l = 0; l < steps_per_level.size(); ++l) {
        if (steps_per_level[l] < 1) throw std::invalid_argument("schedule: step counts must be >= 1");
        if (l > 0 && steps_per_level[l] <= steps_per_level[l - 1])
            throw std::invalid_argument("schedule: step counts must be strictly increasing");
        if (iterations_per_level[l] < 0) throw std::invalid_argument("schedule: negative iteration count");
    }
}

LevelSchedule geometric_schedule(double T, double h0, double factor, int levels, int iterations_per_level) {
    if (!(h0 > 0.0) || !(factor > 1.0) || levels < 1)
        throw std::invalid_argument("geometric_schedule: need h0 > 0, factor > 1, levels >= 1");
    LevelSchedule s;
    s.h0 = h0;
    s.level_factor = factor;
    s.steps_per_level.clear();
    for (int l = 0; l < levels; ++l) {
        const double h = h0 * std::pow(factor, -l);
        const double n = T / h;
        const double rounded = std::round(n);
        if (std::abs(n - rounded) > 1e-9 * n)
            throw std::invalid_argument("geometric_schedule: T / h_" + std::to_string(l) + " is not an integer");
        s.steps_per_level.push_back(static_cast<int>(rounded));
    }
    s.iterations_per_level.assign(static_cast<std::size_t>(levels), iterations_per_level);
    s.validate();
    return s;
}

LevelSchedule default_schedule(double T, int iterations_per_level) {
    return geometric_schedule(T, T / 2.0, 2.0, 5, iterations_per_level);
}

}  // namespace deepbsde
