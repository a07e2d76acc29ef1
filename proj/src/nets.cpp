#include "deepbsde/nets.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace deepbsde {

std::string_view architecture_name(Architecture a) {
    switch (a) {
        case Architecture::FC: return "fc";
        case Architecture::RESNET: return "resnet";
        case Architecture::NAISNET: return "naisnet";
    }
    return "?";
}

std::optional<Architecture> parse_architecture(std::string_view name) {
    if (name == "fc") return Architecture::FC;
    if (name == "resnet") return Architecture::RESNET;
    if (name == "naisnet") return Architecture::NAISNET;
    return std::nullopt;
}

void NetConfig::validate() const {
    if (state_dim < 1) throw std::invalid_argument("network: state dimension must be >= 1");
    if (hidden_width < 1) throw std::invalid_argument("network: hidden_width must be >= 1");
    if (num_hidden_layers < 1) throw std::invalid_argument("network: num_hidden_layers must be >= 1");
    if (!(epsilon > 0.0)) throw std::invalid_argument("network: epsilon must be > 0");
    if (!(block_step_h > 0.0)) throw std::invalid_argument("network: block step h must be > 0");
    if (architecture == Architecture::NAISNET && !(resolved_projection_bound() > 0.0))
        throw std::invalid_argument("network: projection bound must be > 0");
}

std::size_t NetworkParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : entries) n += static_cast<std::size_t>(p.value.size());
    return n;
}

const Parameter* NetworkParams::find(std::string_view name) const {
    for (const auto& p : entries)
        if (p.name == name) return &p;
    return nullptr;
}

std::uint64_t NetworkParams::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : entries) {
        mix(p.name.data(), p.name.size());
        const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
        mix(shape, sizeof(shape));
        mix(p.value.data(), sizeof(double) * static_cast<std::size_t>(p.value.size()));
    }
    return h;
}

NetworkParams zero_params(const NetConfig& config) {
    config.validate();
    const Eigen::Index w = config.hidden_width;
    const Eigen::Index in = config.input_dim();

    NetworkParams p;
    p.config = config;
    p.entries.push_back({"lift.weight", Matrix::Zero(w, in)});
    p.entries.push_back({"lift.bias", Matrix::Zero(w, 1)});
    for (int k = 0; k < config.num_hidden_layers; ++k) {
        const std::string prefix = "block" + std::to_string(k) + ".";
        if (config.architecture == Architecture::NAISNET) {
            p.entries.push_back({prefix + "R", Matrix::Zero(w, w)});
            p.entries.push_back({prefix + "B", Matrix::Zero(w, in)});
            p.entries.push_back({prefix + "C", Matrix::Zero(w, 1)});
        } else {
            p.entries.push_back({prefix + "weight", Matrix::Zero(w, w)});
            p.entries.push_back({prefix + "bias", Matrix::Zero(w, 1)});
        }
    }
    p.entries.push_back({"head.weight", Matrix::Zero(1, w)});
    p.entries.push_back({"head.bias", Matrix::Zero(1, 1)});
    return p;
}

NetworkParams init_params(const NetConfig& config, std::uint64_t seed) {
    NetworkParams p = zero_params(config);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& m) {
        // weights are (fan_out x fan_in)
        const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> dist(-s, s);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    };
    for (auto& e : p.entries) {
        const bool is_bias = e.name.ends_with(".bias") || e.name.ends_with(".C");
        if (!is_bias) fill(e.value);
    }
    project_stability(p);
    return p;
}

BoundParams bind(Graph& graph, const NetworkParams& params, bool requires_grad) {
    std::vector<Node> nodes;
    nodes.reserve(params.size());
    for (const auto& e : params.entries) nodes.push_back(graph.variable(e.value, requires_grad));
    return bind_nodes(params, std::move(nodes));
}

BoundParams bind_nodes(const NetworkParams& layout, std::vector<Node> nodes) {
    if (nodes.size() != layout.size())
        throw std::invalid_argument("bind_nodes: expected " + std::to_string(layout.size()) + " nodes, got " +
                                    std::to_string(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k)
        if (nodes[k].rows() != layout.at(k).rows() || nodes[k].cols() != layout.at(k).cols())
            throw ShapeError("bind_nodes: " + layout.entries[k].name + " expects " +
                             shape_string(layout.at(k).rows(), layout.at(k).cols()) + ", got " +
                             shape_string(nodes[k].rows(), nodes[k].cols()));
    BoundParams b;
    b.config = &layout.config;
    b.nodes = std::move(nodes);

    if (layout.config.architecture == Architecture::NAISNET && !b.nodes.empty()) {
        Graph& graph = b.nodes.front().graph();
        const Eigen::Index w = layout.config.hidden_width;
        const Node shift = graph.constant(Matrix::Identity(w, w) * layout.config.epsilon);
        for (int k = 0; k < layout.config.num_hidden_layers; ++k) {
            Node R = b.nodes[layout.block_index(k)];
            b.block_A.push_back(sub(scale(matmul(transpose(R), R), -1.0), shift));
        }
    }
    return b;
}

Node forward(const BoundParams& params, double t, Node states) {
    const NetConfig& cfg = *params.config;
    if (states.rows() != cfg.state_dim)
        throw ShapeError("forward: state has " + std::to_string(states.rows()) +
                         " rows, network expects d = " + std::to_string(cfg.state_dim));
    Graph& g = states.graph();
    const Eigen::Index batch = states.cols();
    const Node ones_row = g.ones(1, batch);
    const Node input = concat_rows(g.constant(Matrix::Constant(1, batch, t)), states);

    auto affine = [&](Node weight, Node bias, Node x) {
        return add(matmul(weight, x), matmul(bias, ones_row));
    };

    const std::vector<Node>& n = params.nodes;
    Node y = affine(n[0], n[1], input);
    const int per_block = cfg.architecture == Architecture::NAISNET ? 3 : 2;
    for (int k = 0; k < cfg.num_hidden_layers; ++k) {
        const std::size_t base = 2 + static_cast<std::size_t>(k * per_block);
        switch (cfg.architecture) {
            case Architecture::FC:
                y = tanh(affine(n[base], n[base + 1], y));
                break;
            case Architecture::RESNET:
                y = add(y, tanh(affine(n[base], n[base + 1], y)));
                break;
            case Architecture::NAISNET: {
                Node pre = add(add(matmul(params.block_A[static_cast<std::size_t>(k)], y),
                                   matmul(n[base + 1], input)),
                               matmul(n[base + 2], ones_row));
                y = add(y, scale(tanh(pre), cfg.block_step_h));
                break;
            }
        }
    }
    const std::size_t head = n.size() - 2;
    return affine(n[head], n[head + 1], y);
}

ValueAndGradient evaluate_with_gradient(Graph& graph, const BoundParams& params, double t,
                                        const Matrix& states) {
    Node x = graph.variable(states, true);
    Node u = forward(params, t, x);
    // columns are independent, so d(sum u)/dX holds every per-path gradient
    Node z = graph.grad(sum(u), {x})[0];
    return {u, z};
}

Node forward(Graph& graph, const BoundParams& params, double t, const Vector& x) {
    return forward(params, t, graph.constant(Matrix(x)));
}

Node gradient_x(Graph& graph, const BoundParams& params, double t, const Vector& x) {
    return evaluate_with_gradient(graph, params, t, Matrix(x)).gradient;
}

Matrix build_A(const Matrix& R, double epsilon) {
    if (R.rows() != R.cols())
        throw std::invalid_argument("build_A: R must be square, got " +
                                    shape_string(R.rows(), R.cols()));
    if (!(epsilon > 0.0)) throw std::invalid_argument("build_A: epsilon must be > 0");
    const Matrix gram = R.transpose() * R;
    // blocked products need not be bitwise symmetric
    Matrix A = -0.5 * (gram + gram.transpose());
    A.diagonal().array() -= epsilon;
    return A;
}

Matrix project_R_to_bound(const Matrix& R, double bound) {
    const double f = (R.transpose() * R).norm();
    if (f <= bound) return R;
    Matrix scaled = R * std::sqrt(bound / f);
    // rounding can leave the norm an ulp above the bound; the result must be a
    // fixed point of this function
    while ((scaled.transpose() * scaled).norm() > bound) scaled *= 1.0 - 1e-15;
    return scaled;
}

Matrix project_R(const Matrix& R, double epsilon) { return project_R_to_bound(R, 1.0 - epsilon); }

void project_stability(NetworkParams& params) {
    if (params.config.architecture != Architecture::NAISNET) return;
    const double bound = params.config.resolved_projection_bound();
    for (int k = 0; k < params.config.num_hidden_layers; ++k) {
        Matrix& R = params.at(params.block_index(k));
        R = project_R_to_bound(R, bound);
    }
}

}  // namespace deepbsde
