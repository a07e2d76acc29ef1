#include <doctest.h>

#include "deepbsde/graph.hpp"

#include <random>

using namespace deepbsde;

namespace {

Matrix vec(std::initializer_list<double> xs) {
    Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

}  // namespace

TEST_CASE("primitive values") {
    Graph g;
    CHECK(add(g.constant(vec({1, 2})), g.constant(vec({3, 4}))).value() == vec({4, 6}));

    const Matrix v = vec({0.3, -1.2, 2.5});
    CHECK(matvec(g.constant(Matrix::Identity(3, 3)), g.constant(v)).value() == v);
    CHECK(tanh(g.zeros(4, 1)).value() == Matrix::Zero(4, 1));

    CHECK(sub(g.constant(vec({1, 2})), g.constant(vec({3, 5}))).value() == vec({-2, -3}));
    CHECK(mul(g.constant(vec({2, 3})), g.constant(vec({4, 5}))).value() == vec({8, 15}));
    CHECK(sum(g.constant(vec({1, 2, 3}))).scalar() == 6.0);
    CHECK(mean(g.constant(vec({1, 2, 3}))).scalar() == 2.0);
    CHECK(square(g.constant(vec({-3}))).scalar() == 9.0);
    CHECK(pow(g.constant(vec({4})), 0.5).scalar() == doctest::Approx(2.0));
    CHECK(scale(g.constant(vec({1, -2})), 3.0).value() == vec({3, -6}));
    CHECK(norm(g.constant(vec({3, 4}))).scalar() == doctest::Approx(5.0));

    Node c = concat_rows(g.constant(vec({1})), g.constant(vec({2, 3})));
    CHECK(c.value() == vec({1, 2, 3}));
    CHECK(slice_rows(c, 1, 2).value() == vec({2, 3}));
    CHECK(broadcast(g.constant(2.0), 2, 3).value() == Matrix::Constant(2, 3, 2.0));
    CHECK(transpose(g.constant(vec({1, 2}))).rows() == 1);
}

TEST_CASE("shape errors name the op and both shapes") {
    Graph g;
    Node a = g.zeros(2, 1);
    Node b = g.zeros(3, 1);
    CHECK_THROWS_AS(add(a, b), ShapeError);
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("[2x1]") != std::string::npos);
        CHECK(msg.find("[3x1]") != std::string::npos);
    }
    CHECK_THROWS_AS(slice_rows(a, 1, 2), ShapeError);
    CHECK_THROWS_AS(broadcast(a, 2, 2), ShapeError);
}

TEST_CASE("gradients of simple functions") {
    Graph g;
    Node x = g.variable(vec({1, 2}));
    Node f = sum(square(x));
    CHECK(g.grad(f, {x})[0].value() == vec({2, 4}));

    Node y = g.variable(Matrix::Zero(3, 1));
    CHECK(g.grad(sum(tanh(y)), {y})[0].value() == Matrix::Ones(3, 1));
}

TEST_CASE("nested gradient: grad of |grad(x^T x)|^2") {
    Graph g;
    Node x = g.variable(vec({1, 2}));
    Node f = sum(square(x));
    Node df = g.grad(f, {x})[0];
    Node h = sum(square(df));
    CHECK(h.scalar() == doctest::Approx(20.0));
    CHECK(g.grad(h, {x})[0].value() == vec({8, 16}));
}

TEST_CASE("grad preconditions") {
    Graph g;
    Node x = g.variable(vec({1, 2}));
    Node c = g.constant(vec({1, 2}));
    CHECK_THROWS_AS(g.grad(square(x), {x}), std::invalid_argument);
    CHECK_THROWS_AS(g.grad(sum(x), {c}), std::invalid_argument);

    Node unrelated = g.variable(vec({5}));
    CHECK(g.grad(sum(x), {unrelated})[0].value() == Matrix::Zero(1, 1));
}

TEST_CASE("replay reproduces every node bit-exactly") {
    Graph g;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Matrix W = Matrix::NullaryExpr(4, 3, [&] { return n(rng); });
    Matrix X = Matrix::NullaryExpr(3, 5, [&] { return n(rng); });
    Node w = g.variable(W);
    Node x = g.variable(X);
    Node h = tanh(matmul(w, x));
    Node out = sum(pow(norm(h) + g.constant(1.0), 1.5) + mean(square(h)));
    g.grad(out, {w, x});
    for (std::size_t id = 0; id < g.size(); ++id) {
        Node node(&g, id);
        CHECK(g.recompute(id) == node.value());
    }
}

TEST_CASE("finite difference oracle") {
    SUBCASE("quadratic is exact") {
        Matrix A(2, 2);
        A << 2.0, 0.5, 0.5, 1.0;
        const double dev = finite_difference_check(
            [&A](Graph& g, Node x) { return sum(mul(x, matmul(g.constant(A), x))); }, Eigen::Vector2d(0.7, -1.3),
            1e-5);
        CHECK(dev < 1e-8);
    }
    SUBCASE("constant function") {
        const double dev = finite_difference_check(
            [](Graph& g, Node) { return g.constant(3.0); }, Eigen::Vector3d(1, 2, 3), 1e-5);
        CHECK(dev == 0.0);
    }
    SUBCASE("two-layer tanh net") {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n;
        auto rnd = [&](int r, int c) { return Matrix(Matrix::NullaryExpr(r, c, [&] { return 0.5 * n(rng); })); };
        const std::vector<Matrix> point{rnd(5, 3), rnd(5, 1), rnd(1, 5), rnd(3, 4)};
        const double dev = finite_difference_check(
            [](Graph& g, std::span<const Node> p) {
                Node h = tanh(matmul(p[0], p[3]) + matmul(p[1], g.ones(1, 4)));
                return sum(square(matmul(p[2], h)));
            },
            point, 1e-5);
        CHECK(dev < 1e-6);
    }
    SUBCASE("second-order: gradient norm") {
        const double dev = finite_difference_check(
            [](Graph& g, Node x) {
                Node f = sum(tanh(mul(x, x)));
                Node d = g.grad(f, {x})[0];
                return sum(square(d));
            },
            Eigen::Vector3d(0.3, -0.4, 0.8), 1e-5);
        CHECK(dev < 1e-6);
    }
}

TEST_CASE("adjoint rules against finite differences") {
    const Eigen::Vector3d point(0.4, 1.1, 0.7);
    const std::vector<std::pair<const char*, std::function<Node(Graph&, Node)>>> cases{
        {"sub", [](Graph& g, Node x) { return sum(square(x - g.constant(Eigen::Vector3d(1, 0, 2)))); }},
        {"pow", [](Graph&, Node x) { return sum(pow(x, 2.5)); }},
        {"norm", [](Graph&, Node x) { return norm(x); }},
        {"mean", [](Graph&, Node x) { return mean(square(tanh(x))); }},
        {"slice", [](Graph&, Node x) { return sum(square(slice_rows(x, 1, 2))); }},
        {"concat", [](Graph&, Node x) { return sum(tanh(concat_rows(x, scale(x, 2.0)))); }},
        {"transpose", [](Graph&, Node x) { return sum(matmul(transpose(x), x)); }},
        {"broadcast", [](Graph&, Node x) { return sum(mul(broadcast(norm(x), 3, 1), x)); }},
    };
    for (const auto& [name, f] : cases) {
        CAPTURE(name);
        CHECK(finite_difference_check(f, point, 1e-5) < 1e-7);
    }
}
