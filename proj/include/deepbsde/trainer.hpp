#pragma once

// Discretized FBSDE rollout, residual loss and Adam training loops.

#include "deepbsde/errors.hpp"
#include "deepbsde/nets.hpp"
#include "deepbsde/problems.hpp"
#include "deepbsde/sampler.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace deepbsde {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    int batch_M = 100;
    int steps_N = 50;
    int iterations = 0;
    AdamConfig adam;
    bool use_terminal_grad_term = false;
    std::uint64_t seed = 0;
    NetConfig network;
    std::optional<LevelSchedule> schedule;
    bool resample_paths = true;  // false: one fixed path set (debugging)
    int y0_every = 100;          // log Y0 every k iterations (and at the last one)
    int shards = 1;              // independent graphs per batch, reduced in shard order
    int threads = 1;
    double divergence_threshold = 1e12;

    void validate() const;
};

/// Produces (u, grad_x u) on a d x M batch of states at time t.
using Approximator = std::function<ValueAndGradient(Graph&, double t, const Matrix& states)>;

Approximator network_approximator(const BoundParams& params);
/// Hard-wires the closed-form solution in place of a network.
Approximator exact_approximator(const FBSDEProblem& problem);

struct RolloutState {
    TimeGrid grid;
    std::vector<Matrix> X;        // N + 1 entries, d x M (data)
    std::vector<Node> Y;          // N + 1 entries, 1 x M
    std::vector<Node> Z;          // N + 1 entries, d x M
    std::vector<Node> residual;   // N entries, 1 x M
};

/// Rolls the Euler-Maruyama scheme forward from xi. Y_n and Z_n are network
/// evaluations at (t_n, X_n); residual_n = Y_{n+1} - Y_n - phi dt - Z_n^T sigma dW_n.
/// `iteration` is only used to label errors.
RolloutState rollout(Graph& graph, const FBSDEProblem& problem, const Approximator& approx,
                     const PathBatch& batch, int iteration = -1);

/// Sum of squared residuals plus squared terminal mismatches; optionally the
/// squared terminal-gradient mismatch |Z_N - g'(X_N)|^2.
Node loss(Graph& graph, const RolloutState& state, const FBSDEProblem& problem, bool use_terminal_grad);

struct AdamState {
    std::vector<Matrix> first;
    std::vector<Matrix> second;
};

AdamState make_adam_state(const NetworkParams& params);

/// One bias-corrected Adam update (iteration counts from 1), followed by the
/// NAIS-Net projection.
void adam_step(NetworkParams& params, const std::vector<Matrix>& grads, AdamState& state, int iteration,
               const AdamConfig& config);

struct LossGradient {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Loss and d loss / d theta, with the batch split into `shards` contiguous
/// path ranges whose results are summed in shard order.
LossGradient loss_and_gradient(const FBSDEProblem& problem, const NetworkParams& params,
                               const PathBatch& batch, bool use_terminal_grad, int shards = 1,
                               int threads = 1, int iteration = -1);

/// Network prediction u(0, xi).
double predict_y0(const NetworkParams& params, const FBSDEProblem& problem);

struct IterationRecord {
    int iteration = 0;  // 1-based
    int level = 0;
    double loss = 0.0;
    double elapsed_seconds = 0.0;
    double y0 = std::numeric_limits<double>::quiet_NaN();  // NaN when not logged
};

struct TrainReport {
    Architecture architecture = Architecture::FC;
    std::string mode;  // "single" or "multi"
    std::vector<IterationRecord> records;
    std::vector<int> level_boundaries;  // cumulative iteration count at the end of each level
    double y0 = 0.0;
    double total_seconds = 0.0;
    NetworkParams params;

    int iterations() const { return static_cast<int>(records.size()); }
    /// Mean loss over the last `window` iterations (fewer if not available).
    double final_loss(int window = 1) const;
};

using ProgressCallback = std::function<void(const IterationRecord&)>;

/// Seed of the path batch used at a 1-based global iteration.
std::uint64_t iteration_seed(std::uint64_t base_seed, int iteration);

TrainReport train_single_level(const FBSDEProblem& problem, const TrainConfig& config,
                               const ProgressCallback& progress = {});
TrainReport train_multilevel(const FBSDEProblem& problem, const TrainConfig& config,
                             const ProgressCallback& progress = {});
/// Dispatches on whether a schedule is configured.
TrainReport train(const FBSDEProblem& problem, const TrainConfig& config, const ProgressCallback& progress = {});

/// Same loops starting from given parameters.
TrainReport train_levels(const FBSDEProblem& problem, const TrainConfig& config, NetworkParams params,
                         const std::vector<int>& steps, const std::vector<int>& iterations,
                         const std::string& mode, const ProgressCallback& progress = {});

}  // namespace deepbsde
