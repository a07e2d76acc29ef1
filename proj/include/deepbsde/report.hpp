#pragma once

// Post-training evaluation and the CSV files it produces.

#include "deepbsde/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace deepbsde {

struct SummaryStats {
    double mean = 0.0;
    double std_dev = 0.0;  // population standard deviation
};

/// Mean and standard deviation with the mean accumulated relative to the
/// first sample, so a constant sample has exactly zero spread.
SummaryStats summarize(std::span<const double> values);

double relative_error(double predicted, double exact);

struct SamplePath {
    int path_id = 0;
    std::vector<double> y_pred;
    std::vector<double> y_exact;
};

struct ErrorCurve {
    std::vector<double> times;
    std::vector<double> mean_rel_err;
    std::vector<double> mean_plus_2std;
    Matrix per_path;  // (N + 1) x M relative errors
    std::vector<SamplePath> samples;
};

/// Simulates fresh paths under the approximator and compares Y_n against the
/// problem's reference solution at (t_n, X_n).
ErrorCurve evaluate_error_curve(const FBSDEProblem& problem, const Approximator& approx, int paths,
                                int steps, std::uint64_t seed, int sample_paths = 2);
ErrorCurve evaluate_error_curve(const FBSDEProblem& problem, const NetworkParams& params, int paths,
                                int steps, std::uint64_t seed, int sample_paths = 2);

/// Relative error of u(0, xi) against the reference solution.
double initial_relative_error(const FBSDEProblem& problem, const NetworkParams& params);

Vector sample_unit_sphere(int dim, std::mt19937_64& rng);

struct GeneralizationRow {
    double rel_distance_pct = 0.0;
    double mean_rel_err_pct = 0.0;
    double stderr_pct = 0.0;
};

struct GeneralizationSweep {
    Architecture architecture = Architecture::FC;
    std::vector<GeneralizationRow> rows;
    // xi = 0: perturbations are delta * v instead of delta * |xi| * v
    bool absolute_fallback = false;
    std::string protocol = "isotropic-mean";
    std::uint64_t params_checksum = 0;
};

/// Evaluates the trained network at xi' = xi + delta |xi| v with v uniform on
/// the unit sphere, K directions per distance (the same K for every distance).
/// Parameters are never modified.
GeneralizationSweep generalization_sweep(const FBSDEProblem& problem, const NetworkParams& params,
                                         const std::vector<double>& distances, int samples,
                                         std::uint64_t seed);

struct TimingRow {
    std::string architecture;
    std::string mode;
    double total_seconds = 0.0;
    int iterations = 0;
    double final_loss = 0.0;
    double y0_rel_err = 0.0;  // NaN without a reference solution
};

/// One row per report. `loss_window` iterations are averaged for final_loss.
std::vector<TimingRow> timing_table(std::span<const TrainReport> reports, const FBSDEProblem& problem,
                                    int loss_window = 1);

/// Shortest round-trip formatting; empty for NaN.
std::string format_number(double v);

void write_error_curve_csv(std::ostream& out, const ErrorCurve& curve);
void write_sample_paths_csv(std::ostream& out, const ErrorCurve& curve);
void write_generalization_csv(std::ostream& out, std::span<const GeneralizationSweep> sweeps);
void write_timings_csv(std::ostream& out, std::span<const TimingRow> rows);
/// `with_elapsed = false` leaves the elapsed_seconds field empty so the file
/// depends only on (config, seed).
void write_loss_curve_csv(std::ostream& out, const TrainReport& report, bool with_elapsed = true);
void write_convergence_csv(std::ostream& out, std::span<const ConvergenceRow> rows);

}  // namespace deepbsde
