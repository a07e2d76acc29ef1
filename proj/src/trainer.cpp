#include "deepbsde/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

namespace deepbsde {

void TrainConfig::validate() const {
    if (batch_M < 1) throw ConfigError("training.batch_M must be >= 1");
    if (steps_N < 1) throw ConfigError("training.steps_N must be >= 1");
    if (iterations < 0) throw ConfigError("training.iterations must be >= 0");
    if (!(adam.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("training.adam_beta1 must be in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("training.adam_beta2 must be in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("training.adam_eps must be > 0");
    if (y0_every < 1) throw ConfigError("training.y0_every must be >= 1");
    if (shards < 1 || shards > batch_M) throw ConfigError("training.shards must be in [1, batch_M]");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    try {
        network.validate();
        if (schedule) schedule->validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

Approximator network_approximator(const BoundParams& params) {
    return [&params](Graph& g, double t, const Matrix& states) {
        return evaluate_with_gradient(g, params, t, states);
    };
}

Approximator exact_approximator(const FBSDEProblem& problem) {
    if (!problem.has_exact())
        throw std::logic_error("exact_approximator: problem " + problem.name + " has no closed form");
    return [&problem](Graph& g, double t, const Matrix& states) {
        Node x = g.variable(states, true);
        Node u = problem.exact(g, t, x);
        Node z = g.grad(sum(u), {x})[0];
        return ValueAndGradient{u, z};
    };
}

namespace {

std::string coordinates(int iteration, int step, Eigen::Index path) {
    std::ostringstream os;
    os << "(iteration " << iteration << ", step " << step << ", path " << path << ")";
    return os.str();
}

void require_finite(const Matrix& m, const char* what, int iteration, int step) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        if (!m.col(j).allFinite())
            throw NumericalError(std::string("rollout: non-finite ") + what + " at " +
                                 coordinates(iteration, step, j));
}

// sigma(t, X_m, Y_m) dW_m for every column m.
Matrix apply_diffusion(const FBSDEProblem& p, double t, const Matrix& X, const Matrix& Y, const Matrix& dW) {
    switch (p.diffusion_kind) {
        case DiffusionKind::StateDiagonal: return p.diffusion_scale * X.cwiseProduct(dW);
        case DiffusionKind::ScalarIdentity: return p.diffusion_scale * dW;
        case DiffusionKind::General: {
            Matrix out(X.rows(), X.cols());
            for (Eigen::Index m = 0; m < X.cols(); ++m)
                out.col(m) = p.diffusion_matrix(t, X.col(m), Y(0, m)) * dW.col(m);
            return out;
        }
    }
    throw std::logic_error("apply_diffusion: unknown diffusion kind");
}

Node column_sum(Graph& g, Node a) { return matmul(g.ones(1, a.rows()), a); }

}  // namespace

RolloutState rollout(Graph& graph, const FBSDEProblem& problem, const Approximator& approx,
                     const PathBatch& batch, int iteration) {
    if (std::abs(batch.grid.horizon - problem.horizon) > 1e-12 * problem.horizon)
        throw std::invalid_argument("rollout: batch horizon does not match the problem horizon");
    if (batch.dim != problem.dim) throw std::invalid_argument("rollout: batch dimension does not match the problem");

    const int N = batch.grid.steps;
    const double dt = batch.grid.dt();
    RolloutState s;
    s.grid = batch.grid;
    s.X.reserve(static_cast<std::size_t>(N + 1));
    s.X.push_back(problem.xi.replicate(1, batch.paths));

    std::vector<Matrix> diffusion;  // sigma dW per step, shared by X update and residual
    diffusion.reserve(static_cast<std::size_t>(N));
    for (int n = 0; n <= N; ++n) {
        const double t = batch.grid.time(n);
        const Matrix& X = s.X.back();
        ValueAndGradient yz = approx(graph, t, X);
        require_finite(yz.value.value(), "Y", iteration, n);
        require_finite(yz.gradient.value(), "Z", iteration, n);
        s.Y.push_back(yz.value);
        s.Z.push_back(yz.gradient);
        if (n == N) break;

        const Matrix& Yv = yz.value.value();
        Matrix noise = apply_diffusion(problem, t, X, Yv, batch.increments[static_cast<std::size_t>(n)]);
        Matrix next = X + noise;
        if (problem.has_drift()) {
            const Matrix& Zv = yz.gradient.value();
            for (Eigen::Index m = 0; m < X.cols(); ++m)
                next.col(m) += dt * problem.drift(t, X.col(m), Yv(0, m), Zv.col(m));
        }
        require_finite(next, "X", iteration, n + 1);
        diffusion.push_back(std::move(noise));
        s.X.push_back(std::move(next));
    }

    s.residual.reserve(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        const auto i = static_cast<std::size_t>(n);
        const double t = batch.grid.time(n);
        Node phi = problem.driver(graph, t, s.X[i], s.Y[i], s.Z[i]);
        Node martingale = column_sum(graph, mul(s.Z[i], graph.constant(diffusion[i])));
        s.residual.push_back(sub(sub(sub(s.Y[i + 1], s.Y[i]), scale(phi, dt)), martingale));
    }
    return s;
}

Node loss(Graph& graph, const RolloutState& state, const FBSDEProblem& problem, bool use_terminal_grad) {
    if (use_terminal_grad && !problem.has_terminal_gradient())
        throw ConfigError("use_terminal_grad_term requires a terminal gradient for problem " + problem.name);

    const Matrix& XN = state.X.back();
    Matrix target(1, XN.cols());
    for (Eigen::Index m = 0; m < XN.cols(); ++m) target(0, m) = problem.g(XN.col(m));

    Node total = sum(square(sub(state.Y.back(), graph.constant(target))));
    for (const Node& r : state.residual) total = add(total, sum(square(r)));

    if (use_terminal_grad) {
        Matrix slope(XN.rows(), XN.cols());
        for (Eigen::Index m = 0; m < XN.cols(); ++m) slope.col(m) = problem.terminal_gradient(XN.col(m));
        total = add(total, sum(square(sub(state.Z.back(), graph.constant(slope)))));
    }
    return total;
}

AdamState make_adam_state(const NetworkParams& params) {
    AdamState s;
    for (const auto& e : params.entries) {
        s.first.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
        s.second.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    }
    return s;
}

void adam_step(NetworkParams& params, const std::vector<Matrix>& grads, AdamState& state, int iteration,
               const AdamConfig& config) {
    if (grads.size() != params.size() || state.first.size() != params.size())
        throw std::invalid_argument("adam_step: gradient count does not match parameters");
    if (iteration < 1) throw std::invalid_argument("adam_step: iteration counts from 1");

    const double c1 = 1.0 - std::pow(config.beta1, iteration);
    const double c2 = 1.0 - std::pow(config.beta2, iteration);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Matrix& g = grads[k];
        Matrix& p = params.at(k);
        if (g.rows() != p.rows() || g.cols() != p.cols())
            throw std::invalid_argument("adam_step: gradient shape mismatch for " + params.entries[k].name);
        state.first[k] = config.beta1 * state.first[k] + (1.0 - config.beta1) * g;
        state.second[k] = config.beta2 * state.second[k] + (1.0 - config.beta2) * g.cwiseAbs2();
        const auto m_hat = state.first[k].array() / c1;
        const auto v_hat = state.second[k].array() / c2;
        p.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
    }
    project_stability(params);
}

LossGradient loss_and_gradient(const FBSDEProblem& problem, const NetworkParams& params,
                               const PathBatch& batch, bool use_terminal_grad, int shards, int threads,
                               int iteration) {
    if (shards < 1 || shards > batch.paths) throw std::invalid_argument("loss_and_gradient: bad shard count");

    std::vector<LossGradient> parts(static_cast<std::size_t>(shards));
    auto run_shard = [&](int s) {
        const int first = static_cast<int>(static_cast<long long>(batch.paths) * s / shards);
        const int last = static_cast<int>(static_cast<long long>(batch.paths) * (s + 1) / shards);
        const PathBatch piece = shards == 1 ? batch : slice_paths(batch, first, last - first);

        Graph g;
        const BoundParams bound = bind(g, params);
        const RolloutState state = rollout(g, problem, network_approximator(bound), piece, iteration);
        const Node total = loss(g, state, problem, use_terminal_grad);
        LossGradient& out = parts[static_cast<std::size_t>(s)];
        out.loss = total.scalar();
        for (const Node& d : g.grad(total, bound.nodes)) out.grads.push_back(d.value());
    };

    if (threads <= 1 || shards == 1) {
        for (int s = 0; s < shards; ++s) run_shard(s);
    } else {
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(shards));
        for (int begin = 0; begin < shards; begin += threads) {
            std::vector<std::thread> pool;
            const int end = std::min(shards, begin + threads);
            for (int s = begin; s < end; ++s)
                pool.emplace_back([&, s] {
                    try {
                        run_shard(s);
                    } catch (...) {
                        errors[static_cast<std::size_t>(s)] = std::current_exception();
                    }
                });
            for (auto& t : pool) t.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // fixed-order reduction
    LossGradient total = std::move(parts.front());
    for (std::size_t s = 1; s < parts.size(); ++s) {
        total.loss += parts[s].loss;
        for (std::size_t k = 0; k < total.grads.size(); ++k) total.grads[k] += parts[s].grads[k];
    }
    return total;
}

double predict_y0(const NetworkParams& params, const FBSDEProblem& problem) {
    Graph g;
    const BoundParams bound = bind(g, params, false);
    return forward(g, bound, 0.0, problem.xi).scalar();
}

double TrainReport::final_loss(int window) const {
    if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = std::min(records.size(), static_cast<std::size_t>(std::max(window, 1)));
    double acc = 0.0;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) acc += records[i].loss;
    return acc / static_cast<double>(n);
}

std::uint64_t iteration_seed(std::uint64_t base_seed, int iteration) {
    return base_seed + static_cast<std::uint64_t>(iteration);
}

TrainReport train_levels(const FBSDEProblem& problem, const TrainConfig& config, NetworkParams params,
                         const std::vector<int>& steps, const std::vector<int>& iterations,
                         const std::string& mode, const ProgressCallback& progress) {
    config.validate();
    if (steps.size() != iterations.size()) throw ConfigError("train: level step and iteration lists differ in length");
    if (params.config.state_dim != problem.dim)
        throw ConfigError("train: network state dimension " + std::to_string(params.config.state_dim) +
                          " does not match problem dimension " + std::to_string(problem.dim));
    if (config.use_terminal_grad_term && !problem.has_terminal_gradient())
        throw ConfigError("use_terminal_grad_term requires a terminal gradient for problem " + problem.name);

    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    TrainReport report;
    report.architecture = params.config.architecture;
    report.mode = mode;
    AdamState adam = make_adam_state(params);

    int total_iterations = 0;
    for (int it : iterations) total_iterations += it;

    int iteration = 0;
    for (std::size_t level = 0; level < steps.size(); ++level) {
        const TimeGrid grid(problem.horizon, steps[level]);
        PathBatch fixed;
        if (!config.resample_paths) fixed = sample_increments(config.seed, config.batch_M, grid, problem.dim);

        for (int k = 0; k < iterations[level]; ++k) {
            ++iteration;
            const PathBatch batch = config.resample_paths
                                        ? sample_increments(iteration_seed(config.seed, iteration),
                                                            config.batch_M, grid, problem.dim)
                                        : fixed;
            LossGradient lg = loss_and_gradient(problem, params, batch, config.use_terminal_grad_term,
                                                config.shards, config.threads, iteration);
            if (!std::isfinite(lg.loss) || lg.loss > config.divergence_threshold) {
                std::ostringstream os;
                os << "divergence guard: loss " << lg.loss << " at iteration " << iteration << " (level "
                   << level << ")";
                throw NumericalError(os.str());
            }
            adam_step(params, lg.grads, adam, iteration, config.adam);

            IterationRecord rec;
            rec.iteration = iteration;
            rec.level = static_cast<int>(level);
            rec.loss = lg.loss;
            rec.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
            if (iteration % config.y0_every == 0 || iteration == total_iterations)
                rec.y0 = predict_y0(params, problem);
            report.records.push_back(rec);
            if (progress) progress(rec);
        }
        report.level_boundaries.push_back(iteration);
    }

    report.y0 = predict_y0(params, problem);
    report.total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    report.params = std::move(params);
    return report;
}

TrainReport train_single_level(const FBSDEProblem& problem, const TrainConfig& config,
                               const ProgressCallback& progress) {
    if (config.schedule) throw ConfigError("train_single_level: a level schedule is configured");
    NetConfig net = config.network;
    net.state_dim = problem.dim;
    return train_levels(problem, config, init_params(net, config.seed), {config.steps_N}, {config.iterations},
                        "single", progress);
}

TrainReport train_multilevel(const FBSDEProblem& problem, const TrainConfig& config,
                             const ProgressCallback& progress) {
    if (!config.schedule) throw ConfigError("train_multilevel: no level schedule configured");
    NetConfig net = config.network;
    net.state_dim = problem.dim;
    return train_levels(problem, config, init_params(net, config.seed), config.schedule->steps_per_level,
                        config.schedule->iterations_per_level, "multi", progress);
}

TrainReport train(const FBSDEProblem& problem, const TrainConfig& config, const ProgressCallback& progress) {
    return config.schedule ? train_multilevel(problem, config, progress)
                           : train_single_level(problem, config, progress);
}

}  // namespace deepbsde
