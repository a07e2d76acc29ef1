#include "deepbsde/report.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace deepbsde {

SummaryStats summarize(std::span<const double> values) {
    SummaryStats s;
    if (values.empty()) return s;
    const double anchor = values.front();
    double shifted = 0.0;
    for (double v : values) shifted += v - anchor;
    const double n = static_cast<double>(values.size());
    s.mean = anchor + shifted / n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(var / n);
    return s;
}

double relative_error(double predicted, double exact) { return std::abs(predicted - exact) / std::abs(exact); }

namespace {

ErrorCurve error_curve_on(Graph& g, const FBSDEProblem& problem, const Approximator& approx, int paths, int steps,
                          std::uint64_t seed, int sample_paths) {
    if (!problem.has_reference())
        throw std::invalid_argument("evaluate_error_curve: problem " + problem.name + " has no reference solution");
    if (paths < 1 || steps < 1) throw std::invalid_argument("evaluate_error_curve: need paths >= 1 and steps >= 1");

    const TimeGrid grid(problem.horizon, steps);
    const PathBatch batch = sample_increments(seed, paths, grid, problem.dim);
    const RolloutState state = rollout(g, problem, approx, batch);

    ErrorCurve curve;
    curve.per_path.resize(steps + 1, paths);
    Matrix exact(steps + 1, paths);
    for (int n = 0; n <= steps; ++n) {
        const double t = grid.time(n);
        const auto i = static_cast<std::size_t>(n);
        for (int m = 0; m < paths; ++m) {
            exact(n, m) = problem.reference_value(t, state.X[i].col(m));
            curve.per_path(n, m) = relative_error(state.Y[i].value()(0, m), exact(n, m));
        }
        std::vector<double> row(static_cast<std::size_t>(paths));
        for (int m = 0; m < paths; ++m) row[static_cast<std::size_t>(m)] = curve.per_path(n, m);
        const SummaryStats s = summarize(row);
        curve.times.push_back(t);
        curve.mean_rel_err.push_back(s.mean);
        curve.mean_plus_2std.push_back(s.mean + 2.0 * s.std_dev);
    }

    for (int k = 0; k < std::min(sample_paths, paths); ++k) {
        SamplePath sp;
        sp.path_id = k;
        for (int n = 0; n <= steps; ++n) {
            sp.y_pred.push_back(state.Y[static_cast<std::size_t>(n)].value()(0, k));
            sp.y_exact.push_back(exact(n, k));
        }
        curve.samples.push_back(std::move(sp));
    }
    return curve;
}

}  // namespace

ErrorCurve evaluate_error_curve(const FBSDEProblem& problem, const Approximator& approx, int paths, int steps,
                                std::uint64_t seed, int sample_paths) {
    Graph g;
    return error_curve_on(g, problem, approx, paths, steps, seed, sample_paths);
}

ErrorCurve evaluate_error_curve(const FBSDEProblem& problem, const NetworkParams& params, int paths, int steps,
                                std::uint64_t seed, int sample_paths) {
    Graph g;
    const BoundParams bound = bind(g, params, false);
    return error_curve_on(g, problem, network_approximator(bound), paths, steps, seed, sample_paths);
}

double initial_relative_error(const FBSDEProblem& problem, const NetworkParams& params) {
    return relative_error(predict_y0(params, problem), problem.reference_value(0.0, problem.xi));
}

Vector sample_unit_sphere(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(dim);
    double n = 0.0;
    while (n == 0.0) {
        for (int i = 0; i < dim; ++i) v(i) = normal(rng);
        n = v.norm();
    }
    return v / n;
}

GeneralizationSweep generalization_sweep(const FBSDEProblem& problem, const NetworkParams& params,
                                         const std::vector<double>& distances, int samples, std::uint64_t seed) {
    if (distances.empty()) throw std::invalid_argument("generalization_sweep: no distances given");
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (!(distances[i] >= 0.0 && distances[i] <= 1.0))
            throw std::invalid_argument("generalization_sweep: distances must lie in [0, 1]");
        if (i > 0 && distances[i] <= distances[i - 1])
            throw std::invalid_argument("generalization_sweep: distances must be strictly increasing");
    }
    if (samples < 1) throw std::invalid_argument("generalization_sweep: need at least one sample");
    if (!problem.has_reference())
        throw std::invalid_argument("generalization_sweep: problem " + problem.name + " has no reference solution");

    GeneralizationSweep sweep;
    sweep.architecture = params.config.architecture;
    sweep.params_checksum = params.checksum();

    std::mt19937_64 rng(seed);
    Matrix directions(problem.dim, samples);
    for (int k = 0; k < samples; ++k) directions.col(k) = sample_unit_sphere(problem.dim, rng);

    const double radius = problem.xi.norm();
    sweep.absolute_fallback = radius == 0.0;
    const double reach = sweep.absolute_fallback ? 1.0 : radius;

    Graph g;
    const BoundParams bound = bind(g, params, false);
    for (double delta : distances) {
        Matrix points = problem.xi.replicate(1, samples) + (delta * reach) * directions;
        const Matrix pred = forward(bound, 0.0, g.constant(points)).value();
        std::vector<double> errors(static_cast<std::size_t>(samples));
        for (int k = 0; k < samples; ++k)
            errors[static_cast<std::size_t>(k)] =
                100.0 * relative_error(pred(0, k), problem.reference_value(0.0, points.col(k)));
        const SummaryStats s = summarize(errors);
        GeneralizationRow row;
        row.rel_distance_pct = 100.0 * delta;
        row.mean_rel_err_pct = s.mean;
        row.stderr_pct = samples > 1 ? s.std_dev * std::sqrt(static_cast<double>(samples) / (samples - 1)) /
                                           std::sqrt(static_cast<double>(samples))
                                     : 0.0;
        sweep.rows.push_back(row);
    }

    if (params.checksum() != sweep.params_checksum)
        throw std::logic_error("generalization_sweep: parameters changed during the sweep");
    return sweep;
}

std::vector<TimingRow> timing_table(std::span<const TrainReport> reports, const FBSDEProblem& problem,
                                    int loss_window) {
    std::vector<TimingRow> rows;
    for (const TrainReport& r : reports) {
        TimingRow row;
        row.architecture = std::string(architecture_name(r.architecture));
        row.mode = r.mode;
        row.total_seconds = r.total_seconds;
        row.iterations = r.iterations();
        row.final_loss = r.final_loss(loss_window);
        row.y0_rel_err = problem.has_reference() ? relative_error(r.y0, problem.reference_value(0.0, problem.xi))
                                                 : std::numeric_limits<double>::quiet_NaN();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_number(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_error_curve_csv(std::ostream& out, const ErrorCurve& curve) {
    out << "t,mean_rel_err,mean_plus_2std\n";
    for (std::size_t n = 0; n < curve.times.size(); ++n)
        out << format_number(curve.times[n]) << ',' << format_number(curve.mean_rel_err[n]) << ','
            << format_number(curve.mean_plus_2std[n]) << '\n';
}

void write_sample_paths_csv(std::ostream& out, const ErrorCurve& curve) {
    out << "t,path_id,y_pred,y_exact\n";
    for (const SamplePath& sp : curve.samples)
        for (std::size_t n = 0; n < sp.y_pred.size(); ++n)
            out << format_number(curve.times[n]) << ',' << sp.path_id << ',' << format_number(sp.y_pred[n]) << ','
                << format_number(sp.y_exact[n]) << '\n';
}

void write_generalization_csv(std::ostream& out, std::span<const GeneralizationSweep> sweeps) {
    out << "architecture,rel_distance_pct,mean_rel_err_pct,stderr_pct\n";
    for (const GeneralizationSweep& s : sweeps)
        for (const GeneralizationRow& r : s.rows)
            out << architecture_name(s.architecture) << ',' << format_number(r.rel_distance_pct) << ','
                << format_number(r.mean_rel_err_pct) << ',' << format_number(r.stderr_pct) << '\n';
}

void write_timings_csv(std::ostream& out, std::span<const TimingRow> rows) {
    out << "architecture,mode,total_seconds,iterations,final_loss,y0_rel_err\n";
    for (const TimingRow& r : rows)
        out << r.architecture << ',' << r.mode << ',' << format_number(r.total_seconds) << ',' << r.iterations << ','
            << format_number(r.final_loss) << ',' << format_number(r.y0_rel_err) << '\n';
}

void write_loss_curve_csv(std::ostream& out, const TrainReport& report, bool with_elapsed) {
    out << "iteration,level,loss,elapsed_seconds,y0_estimate\n";
    for (const IterationRecord& r : report.records)
        out << r.iteration << ',' << r.level << ',' << format_number(r.loss) << ','
            << (with_elapsed ? format_number(r.elapsed_seconds) : std::string()) << ',' << format_number(r.y0)
            << '\n';
}

void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRow> rows) {
    out << "N,rms_error,ratio\n";
    for (const ConvergenceRow& r : rows)
        out << r.steps << ',' << format_number(r.rms_error) << ','
            << (r.ratio > 0.0 ? format_number(r.ratio) : std::string()) << '\n';
}

}  // namespace deepbsde
