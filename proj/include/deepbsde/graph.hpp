#pragma once

// Dense computation graph with reverse-mode differentiation.
//
// Every value is a column-major Eigen matrix of doubles; scalars are 1x1 and
// vectors are n x 1. Gradients are produced as ordinary graph nodes, so they
// can be differentiated again (reverse-over-reverse). The network code uses
// this to take d/dTheta of an expression that already contains d/dx.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepbsde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Graph;

enum class Op : std::uint8_t {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,        // elementwise
    MatMul,
    Transpose,
    Sum,        // all elements -> 1x1
    Mean,       // all elements -> 1x1
    Square,
    Tanh,
    Pow,        // elementwise power with a fixed real exponent
    Scale,      // multiply by a fixed real
    ConcatRows,
    SliceRows,
    Norm,       // euclidean norm of all elements -> 1x1
    Broadcast,  // 1x1 -> rows x cols
};

const char* op_name(Op op);

/// Thrown when operand shapes violate an op's shape rule.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

/// Lightweight handle to a node stored in a Graph arena.
class Node {
public:
    Node() = default;
    Node(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    bool valid() const { return graph_ != nullptr; }
    Graph& graph() const;
    std::size_t id() const { return id_; }

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool requires_grad() const;
    Op op() const;

    /// Value of a 1x1 node.
    double scalar() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Node variable(Matrix value, bool requires_grad = true);
    Node constant(Matrix value);
    Node constant(double value);
    Node zeros(Eigen::Index rows, Eigen::Index cols);
    Node ones(Eigen::Index rows, Eigen::Index cols);

    /// Gradient of a 1x1 output with respect to each `wrt` node. The result
    /// nodes live in this graph and can be differentiated again. A `wrt` node
    /// that `output` does not depend on gets a zero node of matching shape.
    std::vector<Node> grad(Node output, std::span<const Node> wrt);
    std::vector<Node> grad(Node output, std::initializer_list<Node> wrt) {
        return grad(output, std::span<const Node>(wrt.begin(), wrt.size()));
    }

    std::size_t size() const { return nodes_.size(); }

    /// Drops every node. Handles into this graph become dangling.
    void clear() { nodes_.clear(); }

    /// Re-evaluates node `id` from its parents' stored values.
    Matrix recompute(std::size_t id) const;

    // Used by the free-function op constructors below.
    Node record(Op op, Matrix value, std::size_t a, std::size_t b, double param = 0.0,
                Eigen::Index i0 = 0, Eigen::Index i1 = 0);
    Node record(Op op, Matrix value, std::size_t a, double param = 0.0, Eigen::Index i0 = 0,
                Eigen::Index i1 = 0);

private:
    friend class Node;
    static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

    struct Record {
        Op op = Op::Leaf;
        std::size_t lhs = kNone;
        std::size_t rhs = kNone;
        double param = 0.0;
        Eigen::Index i0 = 0;
        Eigen::Index i1 = 0;
        bool requires_grad = false;
        Matrix value;
    };

    // Emits adjoint contributions of node `id` given its adjoint `g`.
    void backprop(std::size_t id, Node g, std::vector<Node>& adjoint,
                  const std::vector<char>& active);
    void accumulate(std::vector<Node>& adjoint, std::size_t id, Node contribution);

    // deque: references to stored values stay valid while the arena grows
    std::deque<Record> nodes_;
};

// Primitive operations. Every op checks shapes eagerly and records its value.
Node add(Node a, Node b);
Node sub(Node a, Node b);
Node mul(Node a, Node b);
Node matmul(Node a, Node b);
Node matvec(Node a, Node v);
Node transpose(Node a);
Node sum(Node a);
Node mean(Node a);
Node square(Node a);
Node tanh(Node a);
Node pow(Node a, double exponent);
Node scale(Node a, double factor);
Node concat_rows(Node top, Node bottom);
Node slice_rows(Node a, Eigen::Index begin, Eigen::Index count);
Node norm(Node a);
Node broadcast(Node scalar, Eigen::Index rows, Eigen::Index cols);

inline Node operator+(Node a, Node b) { return add(a, b); }
inline Node operator-(Node a, Node b) { return sub(a, b); }
inline Node operator*(double s, Node a) { return scale(a, s); }
inline Node operator-(Node a) { return scale(a, -1.0); }

/// Parameter-vector function whose analytic gradient is taken through the graph.
using GraphFunction = std::function<Node(Graph&, std::span<const Node>)>;

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12).
/// `point` holds one array per graph input; every entry of every array is
/// perturbed by +-step in turn.
double finite_difference_check(const GraphFunction& f, const std::vector<Matrix>& point,
                               double step);

/// Single flat-vector convenience form.
double finite_difference_check(const std::function<Node(Graph&, Node)>& f, const Vector& point,
                               double step);

}  // namespace deepbsde
