#pragma once

// Function approximators u(t, x; theta) shared across every time step.
//
// All three architectures take the lifted input s = (t, x) in R^{d+1},
// project it to the hidden width with an affine lift, run a stack of hidden
// blocks and read out a scalar with an affine head:
//
//   FC      y <- tanh(W y + b)
//   RESNET  y <- y + tanh(W y + b)
//   NAISNET y <- y + h tanh(A y + B s + C),  A = -R^T R - eps I
//
// Evaluation is batched: a d x M state matrix yields a 1 x M row of values.

#include "deepbsde/graph.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deepbsde {

enum class Architecture { FC, RESNET, NAISNET };

std::string_view architecture_name(Architecture a);
std::optional<Architecture> parse_architecture(std::string_view name);

struct NetConfig {
    int state_dim = 1;  // d; the network input is d + 1
    int hidden_width = 256;
    int num_hidden_layers = 4;
    Architecture architecture = Architecture::FC;
    double epsilon = 0.01;
    double block_step_h = 1.0;
    // Frobenius bound on R^T R applied after each optimizer step; <= 0 selects 1 - epsilon.
    double projection_bound = 0.0;

    int input_dim() const { return state_dim + 1; }
    double resolved_projection_bound() const {
        return projection_bound > 0.0 ? projection_bound : 1.0 - epsilon;
    }
    void validate() const;
};

struct Parameter {
    std::string name;
    Matrix value;
};

/// Trainable parameter set. Layout:
///   lift.weight, lift.bias,
///   per block k: FC/RESNET  block{k}.weight, block{k}.bias
///                NAISNET    block{k}.R, block{k}.B, block{k}.C
///   head.weight, head.bias
struct NetworkParams {
    NetConfig config;
    std::vector<Parameter> entries;

    std::size_t size() const { return entries.size(); }
    std::size_t scalar_count() const;
    int params_per_block() const { return config.architecture == Architecture::NAISNET ? 3 : 2; }

    std::size_t block_index(int k) const { return 2 + static_cast<std::size_t>(k * params_per_block()); }
    std::size_t head_index() const { return entries.size() - 2; }

    Matrix& at(std::size_t i) { return entries.at(i).value; }
    const Matrix& at(std::size_t i) const { return entries.at(i).value; }
    const Parameter* find(std::string_view name) const;

    /// FNV-1a over names, shapes and raw value bytes.
    std::uint64_t checksum() const;
};

/// Allocates parameters with the declared shapes, all zero.
NetworkParams zero_params(const NetConfig& config);

/// Symmetric-range uniform init, s = sqrt(6 / (fan_in + fan_out)); biases zero;
/// NAIS-Net R matrices are projected after drawing.
NetworkParams init_params(const NetConfig& config, std::uint64_t seed);

/// Parameters recorded as graph leaves for one evaluation pass.
struct BoundParams {
    const NetConfig* config = nullptr;
    std::vector<Node> nodes;
    std::vector<Node> block_A;  // NAIS-Net only: A_k built from the bound R_k
};

BoundParams bind(Graph& graph, const NetworkParams& params, bool requires_grad = true);
/// Binds existing graph nodes laid out like `layout` (values are ignored).
BoundParams bind_nodes(const NetworkParams& layout, std::vector<Node> nodes);

/// u(t, X; theta) for every column of the d x M matrix `states`; returns 1 x M.
Node forward(const BoundParams& params, double t, Node states);

struct ValueAndGradient {
    Node value;     // 1 x M
    Node gradient;  // d x M, du/dx per column, still differentiable in theta
};

/// Evaluates u and grad_x u at the columns of `states`.
ValueAndGradient evaluate_with_gradient(Graph& graph, const BoundParams& params, double t,
                                        const Matrix& states);

/// Single-point conveniences.
Node forward(Graph& graph, const BoundParams& params, double t, const Vector& x);
Node gradient_x(Graph& graph, const BoundParams& params, double t, const Vector& x);

/// A = -R^T R - eps I.
Matrix build_A(const Matrix& R, double epsilon);

/// Rescales R so that ||R^T R||_F <= 1 - epsilon; R is returned unchanged
/// inside that set.
Matrix project_R(const Matrix& R, double epsilon);

/// Same projection with an explicit bound on ||R^T R||_F.
Matrix project_R_to_bound(const Matrix& R, double bound);

/// Applies project_R to every NAIS-Net R block (no-op for other architectures).
void project_stability(NetworkParams& params);

}  // namespace deepbsde
