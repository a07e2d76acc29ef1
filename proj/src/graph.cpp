#include "deepbsde/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace deepbsde {

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Square: return "square";
        case Op::Tanh: return "tanh";
        case Op::Pow: return "pow";
        case Op::Scale: return "scale";
        case Op::ConcatRows: return "concat_rows";
        case Op::SliceRows: return "slice_rows";
        case Op::Norm: return "norm";
        case Op::Broadcast: return "broadcast";
    }
    return "?";
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    std::ostringstream os;
    os << '[' << rows << 'x' << cols << ']';
    return os.str();
}

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.rows(), a.cols()) +
                     " and " + shape_string(b.rows(), b.cols()));
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

void require_scalar(const char* op, const Matrix& a) {
    if (a.rows() != 1 || a.cols() != 1)
        throw ShapeError(std::string(op) + ": expected a 1x1 operand, got " +
                         shape_string(a.rows(), a.cols()));
}

// Single forward rule shared by op construction and replay, so recomputation
// is bit-identical to the stored value.
Matrix evaluate(Op op, const Matrix* a, const Matrix* b, double param, Eigen::Index i0,
                Eigen::Index i1) {
    switch (op) {
        case Op::Add: return *a + *b;
        case Op::Sub: return *a - *b;
        case Op::Mul: return a->cwiseProduct(*b);
        case Op::MatMul: return (*a) * (*b);
        case Op::Transpose: return a->transpose();
        case Op::Sum: return Matrix::Constant(1, 1, a->sum());
        case Op::Mean: return Matrix::Constant(1, 1, a->sum() / static_cast<double>(a->size()));
        case Op::Square: return a->array().square().matrix();
        case Op::Tanh: return a->array().tanh().matrix();
        case Op::Pow: {
            if (param == 2.0) return a->array().square().matrix();
            if (param == 3.0) return a->array().cube().matrix();
            return a->array().pow(param).matrix();
        }
        case Op::Scale: return param * (*a);
        case Op::ConcatRows: {
            Matrix out(a->rows() + b->rows(), a->cols());
            out.topRows(a->rows()) = *a;
            out.bottomRows(b->rows()) = *b;
            return out;
        }
        case Op::SliceRows: return a->middleRows(i0, i1);
        case Op::Norm: return Matrix::Constant(1, 1, a->norm());
        case Op::Broadcast: return Matrix::Constant(i0, i1, (*a)(0, 0));
        case Op::Leaf:
        case Op::Constant: break;
    }
    throw std::logic_error("evaluate: op has no forward rule");
}

}  // namespace

Graph& Node::graph() const {
    if (!graph_) throw std::logic_error("Node: null graph handle");
    return *graph_;
}

const Matrix& Node::value() const { return graph().nodes_[id_].value; }
bool Node::requires_grad() const { return graph().nodes_[id_].requires_grad; }
Op Node::op() const { return graph().nodes_[id_].op; }

double Node::scalar() const {
    const Matrix& v = value();
    require_scalar("scalar", v);
    return v(0, 0);
}

Node Graph::variable(Matrix value, bool requires_grad) {
    Record r;
    r.op = Op::Leaf;
    r.requires_grad = requires_grad;
    r.value = std::move(value);
    nodes_.push_back(std::move(r));
    return Node(this, nodes_.size() - 1);
}

Node Graph::constant(Matrix value) {
    Record r;
    r.op = Op::Constant;
    r.value = std::move(value);
    nodes_.push_back(std::move(r));
    return Node(this, nodes_.size() - 1);
}

Node Graph::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }
Node Graph::zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }
Node Graph::ones(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Ones(rows, cols)); }

Node Graph::record(Op op, Matrix value, std::size_t a, std::size_t b, double param,
                   Eigen::Index i0, Eigen::Index i1) {
    Record r;
    r.op = op;
    r.lhs = a;
    r.rhs = b;
    r.param = param;
    r.i0 = i0;
    r.i1 = i1;
    r.requires_grad = nodes_[a].requires_grad || (b != kNone && nodes_[b].requires_grad);
    r.value = std::move(value);
    nodes_.push_back(std::move(r));
    return Node(this, nodes_.size() - 1);
}

Node Graph::record(Op op, Matrix value, std::size_t a, double param, Eigen::Index i0,
                   Eigen::Index i1) {
    return record(op, std::move(value), a, kNone, param, i0, i1);
}

Matrix Graph::recompute(std::size_t id) const {
    const Record& r = nodes_.at(id);
    if (r.op == Op::Leaf || r.op == Op::Constant) return r.value;
    const Matrix* a = &nodes_[r.lhs].value;
    const Matrix* b = r.rhs == kNone ? nullptr : &nodes_[r.rhs].value;
    return evaluate(r.op, a, b, r.param, r.i0, r.i1);
}

namespace {

Graph& common_graph(Node a, Node b) {
    if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
    return a.graph();
}

Node binary(Op op, Node a, Node b) {
    Graph& g = common_graph(a, b);
    return g.record(op, evaluate(op, &a.value(), &b.value(), 0.0, 0, 0), a.id(), b.id());
}

Node unary(Op op, Node a, double param = 0.0, Eigen::Index i0 = 0, Eigen::Index i1 = 0) {
    return a.graph().record(op, evaluate(op, &a.value(), nullptr, param, i0, i1), a.id(), param,
                            i0, i1);
}

}  // namespace

Node add(Node a, Node b) {
    require_same_shape("add", a.value(), b.value());
    return binary(Op::Add, a, b);
}

Node sub(Node a, Node b) {
    require_same_shape("sub", a.value(), b.value());
    return binary(Op::Sub, a, b);
}

Node mul(Node a, Node b) {
    require_same_shape("mul", a.value(), b.value());
    return binary(Op::Mul, a, b);
}

Node matmul(Node a, Node b) {
    if (a.cols() != b.rows()) shape_mismatch("matmul", a.value(), b.value());
    return binary(Op::MatMul, a, b);
}

Node matvec(Node a, Node v) {
    if (v.cols() != 1 || a.cols() != v.rows()) shape_mismatch("matvec", a.value(), v.value());
    return binary(Op::MatMul, a, v);
}

Node transpose(Node a) { return unary(Op::Transpose, a); }
Node sum(Node a) { return unary(Op::Sum, a); }

Node mean(Node a) {
    if (a.value().size() == 0) throw ShapeError("mean: empty operand");
    return unary(Op::Mean, a);
}

Node square(Node a) { return unary(Op::Square, a); }
Node tanh(Node a) { return unary(Op::Tanh, a); }
Node pow(Node a, double exponent) { return unary(Op::Pow, a, exponent); }
Node scale(Node a, double factor) { return unary(Op::Scale, a, factor); }

Node concat_rows(Node top, Node bottom) {
    if (top.cols() != bottom.cols()) shape_mismatch("concat_rows", top.value(), bottom.value());
    return binary(Op::ConcatRows, top, bottom);
}

Node slice_rows(Node a, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > a.rows())
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(a.rows(), a.cols()));
    return unary(Op::SliceRows, a, 0.0, begin, count);
}

Node norm(Node a) { return unary(Op::Norm, a); }

Node broadcast(Node scalar, Eigen::Index rows, Eigen::Index cols) {
    require_scalar("broadcast", scalar.value());
    return unary(Op::Broadcast, scalar, 0.0, rows, cols);
}

void Graph::accumulate(std::vector<Node>& adjoint, std::size_t id, Node contribution) {
    Node& slot = adjoint[id];
    slot = slot.valid() ? add(slot, contribution) : contribution;
}

void Graph::backprop(std::size_t id, Node g, std::vector<Node>& adjoint,
                     const std::vector<char>& active) {
    // Copy the fields up front: creating nodes below may grow the arena.
    const Op op = nodes_[id].op;
    const std::size_t lhs = nodes_[id].lhs;
    const std::size_t rhs = nodes_[id].rhs;
    const double param = nodes_[id].param;
    const Eigen::Index i0 = nodes_[id].i0;
    const Eigen::Index i1 = nodes_[id].i1;

    const bool lhs_on = lhs != kNone && active[lhs];
    const bool rhs_on = rhs != kNone && active[rhs];
    if (!lhs_on && !rhs_on) return;

    const Node self(this, id);
    const Node a(this, lhs);
    const Node b = rhs == kNone ? Node() : Node(this, rhs);
    const Eigen::Index a_rows = nodes_[lhs].value.rows();
    const Eigen::Index a_cols = nodes_[lhs].value.cols();

    switch (op) {
        case Op::Add:
            if (lhs_on) accumulate(adjoint, lhs, g);
            if (rhs_on) accumulate(adjoint, rhs, g);
            break;
        case Op::Sub:
            if (lhs_on) accumulate(adjoint, lhs, g);
            if (rhs_on) accumulate(adjoint, rhs, scale(g, -1.0));
            break;
        case Op::Mul:
            if (lhs_on) accumulate(adjoint, lhs, mul(g, b));
            if (rhs_on) accumulate(adjoint, rhs, mul(g, a));
            break;
        case Op::MatMul:
            if (lhs_on) accumulate(adjoint, lhs, matmul(g, transpose(b)));
            if (rhs_on) accumulate(adjoint, rhs, matmul(transpose(a), g));
            break;
        case Op::Transpose:
            accumulate(adjoint, lhs, transpose(g));
            break;
        case Op::Sum:
            accumulate(adjoint, lhs, broadcast(g, a_rows, a_cols));
            break;
        case Op::Mean:
            accumulate(adjoint, lhs,
                       broadcast(scale(g, 1.0 / static_cast<double>(a_rows * a_cols)), a_rows,
                                 a_cols));
            break;
        case Op::Square:
            accumulate(adjoint, lhs, mul(g, scale(a, 2.0)));
            break;
        case Op::Tanh:
            // d tanh = 1 - tanh^2, expressed on the output node
            accumulate(adjoint, lhs, mul(g, sub(ones(a_rows, a_cols), square(self))));
            break;
        case Op::Pow:
            if (param != 0.0) {
                Node slope = param == 2.0 ? scale(a, 2.0) : scale(pow(a, param - 1.0), param);
                accumulate(adjoint, lhs, mul(g, slope));
            }
            break;
        case Op::Scale:
            accumulate(adjoint, lhs, scale(g, param));
            break;
        case Op::ConcatRows: {
            const Eigen::Index top = a_rows;
            const Eigen::Index bottom = nodes_[rhs].value.rows();
            if (lhs_on) accumulate(adjoint, lhs, slice_rows(g, 0, top));
            if (rhs_on) accumulate(adjoint, rhs, slice_rows(g, top, bottom));
            break;
        }
        case Op::SliceRows: {
            Node padded = g;
            if (i0 > 0) padded = concat_rows(zeros(i0, a_cols), padded);
            const Eigen::Index below = a_rows - i0 - i1;
            if (below > 0) padded = concat_rows(padded, zeros(below, a_cols));
            accumulate(adjoint, lhs, padded);
            break;
        }
        case Op::Norm: {
            // d|a| = a / |a|; undefined at a = 0
            Node coeff = mul(g, pow(self, -1.0));
            accumulate(adjoint, lhs, mul(a, broadcast(coeff, a_rows, a_cols)));
            break;
        }
        case Op::Broadcast:
            accumulate(adjoint, lhs, sum(g));
            break;
        case Op::Leaf:
        case Op::Constant:
            break;
    }
}

std::vector<Node> Graph::grad(Node output, std::span<const Node> wrt) {
    if (&output.graph() != this) throw std::invalid_argument("grad: output belongs to another graph");
    const Matrix& out = output.value();
    if (out.rows() != 1 || out.cols() != 1)
        throw std::invalid_argument("grad: output must be scalar, got " +
                                    shape_string(out.rows(), out.cols()));

    const std::size_t last = output.id();
    std::vector<char> is_target(last + 1, 0);
    for (const Node& w : wrt) {
        if (&w.graph() != this) throw std::invalid_argument("grad: wrt node belongs to another graph");
        if (!w.requires_grad())
            throw std::invalid_argument("grad: wrt node " + std::to_string(w.id()) +
                                        " does not require grad");
        if (w.id() <= last) is_target[w.id()] = 1;
    }

    // active[i]: node i lies on a path from some wrt node.
    std::vector<char> active(last + 1, 0);
    for (std::size_t i = 0; i <= last; ++i) {
        const Record& r = nodes_[i];
        if (is_target[i]) {
            active[i] = 1;
        } else if (r.requires_grad && r.op != Op::Leaf) {
            active[i] = (r.lhs != kNone && active[r.lhs]) || (r.rhs != kNone && active[r.rhs]);
        }
    }

    std::vector<Node> adjoint(last + 1);
    if (active[last]) {
        adjoint[last] = constant(1.0);
        for (std::size_t i = last + 1; i-- > 0;) {
            if (!adjoint[i].valid() || !active[i]) continue;
            if (nodes_[i].op == Op::Leaf || nodes_[i].op == Op::Constant) continue;
            backprop(i, adjoint[i], adjoint, active);
        }
    }

    std::vector<Node> result;
    result.reserve(wrt.size());
    for (const Node& w : wrt) {
        if (w.id() <= last && adjoint[w.id()].valid())
            result.push_back(adjoint[w.id()]);
        else
            result.push_back(zeros(w.rows(), w.cols()));
    }
    return result;
}

double finite_difference_check(const GraphFunction& f, const std::vector<Matrix>& point,
                               double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");

    auto evaluate_at = [&](const std::vector<Matrix>& p) {
        Graph g;
        std::vector<Node> inputs;
        inputs.reserve(p.size());
        for (const Matrix& m : p) inputs.push_back(g.variable(m));
        return f(g, inputs).scalar();
    };

    std::vector<Matrix> analytic;
    {
        Graph g;
        std::vector<Node> inputs;
        for (const Matrix& m : point) inputs.push_back(g.variable(m));
        Node out = f(g, inputs);
        for (const Node& d : g.grad(out, inputs)) analytic.push_back(d.value());
    }

    double worst = 0.0;
    std::vector<Matrix> probe = point;
    for (std::size_t k = 0; k < point.size(); ++k) {
        for (Eigen::Index i = 0; i < point[k].size(); ++i) {
            const double base = point[k](i);
            probe[k](i) = base + step;
            const double up = evaluate_at(probe);
            probe[k](i) = base - step;
            const double down = evaluate_at(probe);
            probe[k](i) = base;

            const double central = (up - down) / (2.0 * step);
            const double exact = analytic[k](i);
            const double dev = std::abs(exact - central) / (std::abs(exact) + std::abs(central) + 1e-12);
            worst = std::max(worst, dev);
        }
    }
    return worst;
}

double finite_difference_check(const std::function<Node(Graph&, Node)>& f, const Vector& point,
                               double step) {
    GraphFunction wrapped = [&](Graph& g, std::span<const Node> in) { return f(g, in[0]); };
    return finite_difference_check(wrapped, std::vector<Matrix>{Matrix(point)}, step);
}

}  // namespace deepbsde
