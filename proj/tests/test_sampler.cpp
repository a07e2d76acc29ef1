#include <doctest.h>

#include "deepbsde/errors.hpp"
#include "deepbsde/sampler.hpp"

#include <limits>

using namespace deepbsde;

namespace {

FBSDEProblem still_problem(int d, double phi_value) {
    FBSDEProblem p = linear_heat(Vector::Ones(d), 1.0, Vector::Zero(d));
    p.diffusion_scale = 0.0;
    p.driver = [phi_value](Graph& g, double, const Matrix&, Node y, Node) {
        return g.constant(Matrix::Constant(1, y.cols(), phi_value));
    };
    return p;
}

}  // namespace

TEST_CASE("time grid") {
    const TimeGrid g(1.0, 4);
    CHECK(g.dt() == 0.25);
    CHECK(g.time(0) == 0.0);
    CHECK(g.time(4) == 1.0);
    CHECK_THROWS_AS(TimeGrid(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(-1.0, 3), std::invalid_argument);
}

TEST_CASE("increment statistics") {
    const TimeGrid grid(0.5, 1);
    const PathBatch b = sample_increments(17, 1000, grid, 1000);
    const Matrix& w = b.increments[0];
    const double n = static_cast<double>(w.size());
    const double mean = w.sum() / n;
    const double var = (w.array() - mean).square().sum() / (n - 1);
    CHECK(std::abs(mean) < 4.0 * std::sqrt(grid.dt() / n));
    CHECK(std::abs(var - grid.dt()) < 0.02 * grid.dt());
}

TEST_CASE("sampling is deterministic and per-path") {
    const TimeGrid grid(1.0, 5);
    const PathBatch a = sample_increments(3, 8, grid, 2);
    const PathBatch b = sample_increments(3, 8, grid, 2);
    const PathBatch c = sample_increments(4, 8, grid, 2);
    for (std::size_t n = 0; n < 5; ++n) {
        CHECK(a.increments[n] == b.increments[n]);
        CHECK(a.increments[n] != c.increments[n]);
    }
    // a path's draws do not depend on how many other paths are sampled
    const PathBatch wide = sample_increments(3, 20, grid, 2);
    for (std::size_t n = 0; n < 5; ++n) CHECK(wide.increments[n].leftCols(8) == a.increments[n]);

    const PathBatch s = slice_paths(wide, 5, 3);
    CHECK(s.paths == 3);
    CHECK(s.increments[2] == wide.increments[2].middleCols(5, 3));
    CHECK_THROWS_AS(slice_paths(wide, 18, 3), std::invalid_argument);
}

TEST_CASE("coarsening") {
    const TimeGrid grid(1.0, 8);
    const PathBatch fine = sample_increments(1, 50, grid, 3);

    const PathBatch same = coarsen_increments(fine, 1);
    for (std::size_t n = 0; n < 8; ++n) CHECK(same.increments[n] == fine.increments[n]);

    const PathBatch one = coarsen_increments(fine, 8);
    REQUIRE(one.increments.size() == 1);
    CHECK(one.grid.dt() == 1.0);
    CHECK(one.increments[0].isApprox(fine.terminal_value(), 1e-14));

    const PathBatch half = coarsen_increments(fine, 2);
    CHECK(half.increments[1] == fine.increments[2] + fine.increments[3]);
    CHECK_THROWS_AS(coarsen_increments(fine, 3), std::invalid_argument);
}

TEST_CASE("coarsened variance") {
    const TimeGrid grid(1.0, 16);
    const PathBatch fine = sample_increments(9, 25000, grid, 1);
    const PathBatch coarse = coarsen_increments(fine, 4);
    double sq = 0.0;
    for (const Matrix& inc : coarse.increments) sq += inc.squaredNorm();
    const double var = sq / (coarse.increments.size() * 25000.0);
    CHECK(std::abs(var - 4 * grid.dt()) < 0.02 * 4 * grid.dt());
}

TEST_CASE("euler step") {
    SUBCASE("zero coefficients") {
        const FBSDEProblem p = still_problem(2, 0.0);
        const EulerStep s = euler_step(0.0, Eigen::Vector2d(1, 2), 0.5, Eigen::Vector2d(3, 4), 0.1,
                                       Eigen::Vector2d(0.3, -0.2), p);
        CHECK(s.x_next == Vector(Eigen::Vector2d(1, 2)));
        CHECK(s.y_drift_incr == 0.0);
        CHECK(s.y_diff_incr == 0.0);
    }
    SUBCASE("constant driver") {
        const EulerStep s = euler_step(0.0, Eigen::Vector2d(1, 2), 0.5, Eigen::Vector2d(3, 4), 0.5,
                                       Eigen::Vector2d(0.3, -0.2), still_problem(2, 3.0));
        CHECK(s.y_drift_incr == 1.5);
    }
    SUBCASE("black-scholes step") {
        const FBSDEProblem p = black_scholes(2, 0.05, 0.4, 1.0, ones_vector(2));
        const EulerStep s = euler_step(0.0, Eigen::Vector2d(1, 1), 2.0, Eigen::Vector2d(0.5, 1.0), 0.01,
                                       Eigen::Vector2d(0.1, -0.2), p);
        CHECK(s.x_next(0) == doctest::Approx(1.04));
        CHECK(s.x_next(1) == doctest::Approx(0.92));
        CHECK(s.y_diff_incr == doctest::Approx(0.5 * 0.04 + 1.0 * -0.08));
        CHECK(s.y_drift_incr == doctest::Approx(0.01 * 0.05 * (2.0 - 1.5)));
    }
    SUBCASE("non-finite coefficients are reported") {
        FBSDEProblem p = black_scholes(2, 0.05, 0.4, 1.0, ones_vector(2));
        const double inf = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(euler_step(0.0, Eigen::Vector2d(inf, 1), 1.0, Eigen::Vector2d(0, 0), 0.1,
                                   Eigen::Vector2d(0.1, 0.1), p),
                        NumericalError);
    }
}

TEST_CASE("gbm paths") {
    const TimeGrid grid(1.0, 10);
    const PathBatch b = sample_increments(2, 5, grid, 1);
    const Vector x0 = Vector::Constant(1, 2.0);

    SUBCASE("sigma = 0 is deterministic exponential growth") {
        const auto exact = gbm_exact_path(x0, 0.3, 0.0, b);
        for (int n = 0; n <= 10; ++n)
            CHECK(exact[static_cast<std::size_t>(n)](0, 3) == doctest::Approx(2.0 * std::exp(0.3 * grid.time(n))));
    }
    SUBCASE("mu = sigma = 0 is constant") {
        for (const auto& x : gbm_euler_path(x0, 0.0, 0.0, b)) CHECK(x == Matrix::Constant(1, 5, 2.0));
        for (const auto& x : gbm_exact_path(x0, 0.0, 0.0, b)) CHECK(x.isApprox(Matrix::Constant(1, 5, 2.0)));
    }
    CHECK_THROWS_AS(gbm_exact_path(Vector::Constant(1, -1.0), 0.1, 0.2, b), std::invalid_argument);
}

TEST_CASE("strong convergence") {
    ConvergenceStudy study;
    const std::vector<ConvergenceRow> rows = strong_convergence(study);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].ratio == 0.0);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].ratio >= 1.2);
        CHECK(rows[i].ratio <= 1.7);
        CHECK(rows[i].rms_error < rows[i - 1].rms_error);
    }

    study.sigma = 0.0;
    study.mu = 0.5;
    const std::vector<ConvergenceRow> ode = strong_convergence(study);
    for (const ConvergenceRow& r : ode) {
        const double euler = std::pow(1.0 + 0.5 / r.steps, r.steps);
        CHECK(r.rms_error == doctest::Approx(std::exp(0.5) - euler).epsilon(1e-9));
    }
    for (std::size_t i = 1; i < ode.size(); ++i) CHECK(ode[i].ratio == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("level schedules") {
    const LevelSchedule s = default_schedule(1.0, 100);
    CHECK(s.steps_per_level == std::vector<int>{2, 4, 8, 16, 32});
    CHECK(s.total_iterations() == 500);
    const LevelSchedule t = geometric_schedule(2.0, 0.5, 3.0, 3, 10);
    CHECK(t.steps_per_level == std::vector<int>{4, 12, 36});

    LevelSchedule bad = s;
    bad.steps_per_level = {4, 4, 8, 16, 32};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.iterations_per_level.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(geometric_schedule(1.0, 0.3, 2.0, 2, 1), std::invalid_argument);
}
