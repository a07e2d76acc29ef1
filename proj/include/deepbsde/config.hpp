#pragma once

// Run configuration: an INI file with sections
//
//   [problem]        name, d, T, r, sigma, xi_mode, xi_value, terminal_norm,
//                    oracle_samples, oracle_seed
//   [network]        architecture, width, layers, epsilon, h, projection_bound
//   [training]       batch_M, steps_N, iterations, learning_rate, adam_beta1,
//                    adam_beta2, adam_eps, seed, use_terminal_grad_term,
//                    resample_paths, y0_every, shards, threads
//   [schedule]       levels, iterations_per_level
//   [evaluation]     paths, steps, seed, sample_paths
//   [generalization] distances, samples, seed
//   [convergence]    mu, sigma, T, x0, paths, steps, seed
//   [output]         directory, record_elapsed
//
// problem.name is required; every other key has a default. Unknown sections
// and keys are rejected.

#include "deepbsde/errors.hpp"
#include "deepbsde/problems.hpp"
#include "deepbsde/sampler.hpp"
#include "deepbsde/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace deepbsde {

struct ProblemSection {
    std::string name;
    std::optional<int> d;
    std::optional<double> T;
    double r = 0.05;
    double sigma = 0.4;
    std::string xi_mode;  // "ones", "zeros" or "constant"; empty = problem default
    double xi_value = 1.0;
    std::string terminal_norm = "squared";  // allen_cahn only: "squared" or "plain"
    int oracle_samples = 100000;
    std::uint64_t oracle_seed = 0;
};

struct NetworkSection {
    std::string architecture = "fc";
    int width = 256;
    int layers = 4;
    double epsilon = 0.01;
    double h = 1.0;
    double projection_bound = 0.0;  // 0: 1 - epsilon
};

struct TrainingSection {
    int batch_M = 100;
    int steps_N = 50;
    int iterations = 1000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    bool use_terminal_grad_term = false;
    bool resample_paths = true;
    int y0_every = 100;
    int shards = 1;
    int threads = 1;
};

struct ScheduleSection {
    std::vector<int> levels;                // empty: single-level training
    std::vector<int> iterations_per_level;  // empty: training.iterations split evenly
};

struct EvaluationSection {
    int paths = 100;
    std::optional<int> steps;  // default: training.steps_N
    std::uint64_t seed = 1;
    int sample_paths = 2;
};

struct GeneralizationSection {
    std::vector<double> distances{0.0, 0.05, 0.10, 0.15, 0.20};
    int samples = 100;
    std::uint64_t seed = 2;
};

struct ConvergenceSection {
    double mu = 0.05;
    double sigma = 0.2;
    double T = 1.0;
    double x0 = 1.0;
    int paths = 4096;
    std::vector<int> steps{8, 16, 32, 64};
    std::uint64_t seed = 3;
};

struct OutputSection {
    std::string directory = "run";
    bool record_elapsed = true;
};

struct RunConfig {
    ProblemSection problem;
    NetworkSection network;
    TrainingSection training;
    ScheduleSection schedule;
    EvaluationSection evaluation;
    GeneralizationSection generalization;
    ConvergenceSection convergence;
    OutputSection output;
};

/// Parses INI text. Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its resolved value, in the same INI format.
std::string resolved_config_text(const RunConfig& config);

FBSDEProblem make_problem(const RunConfig& config);
NetConfig make_net_config(const RunConfig& config, int state_dim);
TrainConfig make_train_config(const RunConfig& config, int state_dim);
ConvergenceStudy make_convergence_study(const RunConfig& config);

}  // namespace deepbsde
