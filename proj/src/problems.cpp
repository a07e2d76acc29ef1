#include "deepbsde/problems.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace deepbsde {

namespace {

Node column_sum(Graph& g, Node a) { return matmul(g.ones(1, a.rows()), a); }

void require_dim(const char* who, int d, const Vector& xi) {
    if (d < 1) throw std::invalid_argument(std::string(who) + ": d must be >= 1");
    if (xi.size() != d)
        throw std::invalid_argument(std::string(who) + ": xi has length " + std::to_string(xi.size()) +
                                    ", expected " + std::to_string(d));
}

void require_horizon(const char* who, double T) {
    if (!(T > 0.0)) throw std::invalid_argument(std::string(who) + ": T must be > 0");
}

}  // namespace

Vector FBSDEProblem::mu(double t, const Vector& x, double y, const Vector& z) const {
    if (!drift) return Vector::Zero(x.size());
    return drift(t, x, y, z);
}

Matrix FBSDEProblem::sigma(double t, const Vector& x, double y) const {
    switch (diffusion_kind) {
        case DiffusionKind::StateDiagonal: return (diffusion_scale * x).asDiagonal();
        case DiffusionKind::ScalarIdentity: return diffusion_scale * Matrix::Identity(x.size(), x.size());
        case DiffusionKind::General: return diffusion_matrix(t, x, y);
    }
    throw std::logic_error("sigma: unknown diffusion kind");
}

Vector FBSDEProblem::sigma_times(double t, const Vector& x, double y, const Vector& v) const {
    switch (diffusion_kind) {
        case DiffusionKind::StateDiagonal: return diffusion_scale * x.cwiseProduct(v);
        case DiffusionKind::ScalarIdentity: return diffusion_scale * v;
        case DiffusionKind::General: return diffusion_matrix(t, x, y) * v;
    }
    throw std::logic_error("sigma_times: unknown diffusion kind");
}

double FBSDEProblem::phi(double t, const Vector& x, double y, const Vector& z) const {
    Graph g;
    return driver(g, t, Matrix(x), g.constant(y), g.constant(Matrix(z))).scalar();
}

double FBSDEProblem::exact_value(double t, const Vector& x) const {
    if (!exact) throw std::logic_error("problem " + name + " has no closed-form solution");
    Graph g;
    return exact(g, t, g.constant(Matrix(x))).scalar();
}

double FBSDEProblem::reference_value(double t, const Vector& x) const {
    if (exact) return exact_value(t, x);
    if (reference) return reference(t, x);
    throw std::logic_error("problem " + name + " has no reference solution");
}

Vector ones_vector(int d) { return Vector::Ones(d); }

FBSDEProblem black_scholes(int d, double r, double sigma, double T, const Vector& xi) {
    require_dim("black_scholes", d, xi);
    require_horizon("black_scholes", T);
    if (!(sigma > 0.0)) throw std::invalid_argument("black_scholes: sigma must be > 0");

    FBSDEProblem p;
    p.name = "black_scholes";
    p.dim = d;
    p.horizon = T;
    p.xi = xi;
    p.diffusion_kind = DiffusionKind::StateDiagonal;
    p.diffusion_scale = sigma;
    p.driver = [r](Graph& g, double, const Matrix& states, Node y, Node z) {
        Node zx = column_sum(g, mul(z, g.constant(states)));
        return scale(sub(y, zx), r);
    };
    p.terminal = [](const Vector& x) { return x.squaredNorm(); };
    p.terminal_gradient = [](const Vector& x) -> Vector { return 2.0 * x; };
    const double rate = r + sigma * sigma;
    p.exact = [rate, T](Graph& g, double t, Node states) {
        return scale(column_sum(g, square(states)), std::exp(rate * (T - t)));
    };
    return p;
}

double hjb_terminal(const Vector& x) { return std::log(0.5 * (1.0 + x.squaredNorm())); }

FBSDEProblem hjb(int d, double T, const Vector& xi, std::uint64_t oracle_seed, int oracle_samples) {
    require_dim("hjb", d, xi);
    require_horizon("hjb", T);

    FBSDEProblem p;
    p.name = "hjb";
    p.dim = d;
    p.horizon = T;
    p.xi = xi;
    p.diffusion_kind = DiffusionKind::ScalarIdentity;
    p.diffusion_scale = std::sqrt(2.0);
    p.driver = [](Graph& g, double, const Matrix&, Node, Node z) { return column_sum(g, square(z)); };
    p.terminal = hjb_terminal;
    p.terminal_gradient = [](const Vector& x) -> Vector { return 2.0 * x / (1.0 + x.squaredNorm()); };
    p.reference = [T, oracle_seed, oracle_samples](double t, const Vector& x) {
        return hjb_exact_mc(x, t, T, oracle_samples, oracle_seed).estimate;
    };
    return p;
}

FBSDEProblem allen_cahn(int d, double T, const Vector& xi, bool squared_norm) {
    require_dim("allen_cahn", d, xi);
    require_horizon("allen_cahn", T);

    FBSDEProblem p;
    p.name = "allen_cahn";
    p.dim = d;
    p.horizon = T;
    p.xi = xi;
    p.diffusion_kind = DiffusionKind::ScalarIdentity;
    p.diffusion_scale = 1.0;
    p.driver = [](Graph&, double, const Matrix&, Node y, Node) { return sub(pow(y, 3.0), y); };
    if (squared_norm) {
        p.terminal = [](const Vector& x) { return 1.0 / (2.0 + 0.4 * x.squaredNorm()); };
        p.terminal_gradient = [](const Vector& x) -> Vector {
            const double s = 2.0 + 0.4 * x.squaredNorm();
            return -0.8 * x / (s * s);
        };
    } else {
        p.terminal = [](const Vector& x) { return 1.0 / (2.0 + 0.4 * x.norm()); };
        p.terminal_gradient = [](const Vector& x) -> Vector {
            const double n = x.norm();
            if (n == 0.0) return Vector::Zero(x.size());
            const double s = 2.0 + 0.4 * n;
            return -0.4 * x / (n * s * s);
        };
    }
    return p;
}

FBSDEProblem linear_heat(const Vector& w, double T, const Vector& xi) {
    const int d = static_cast<int>(w.size());
    require_dim("linear_heat", d, xi);
    require_horizon("linear_heat", T);

    FBSDEProblem p;
    p.name = "linear_heat";
    p.dim = d;
    p.horizon = T;
    p.xi = xi;
    p.diffusion_kind = DiffusionKind::ScalarIdentity;
    p.diffusion_scale = 1.0;
    p.driver = [](Graph& g, double, const Matrix&, Node y, Node) { return g.zeros(1, y.cols()); };
    p.terminal = [w](const Vector& x) { return w.dot(x); };
    p.terminal_gradient = [w](const Vector&) -> Vector { return w; };
    const Matrix row = w.transpose();
    p.exact = [row](Graph& g, double, Node states) { return matmul(g.constant(row), states); };
    return p;
}

MonteCarloEstimate hjb_exact_mc(const Vector& x, double t, double T, int samples, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("hjb_exact_mc: samples must be >= 1");
    if (t > T) throw std::invalid_argument("hjb_exact_mc: t must not exceed T");
    if (t == T) return {hjb_terminal(x), 0.0};

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double spread = std::sqrt(2.0 * (T - t));

    std::vector<double> exponent(static_cast<std::size_t>(samples));
    Vector point(x.size());
    for (auto& v : exponent) {
        for (Eigen::Index i = 0; i < x.size(); ++i) point(i) = x(i) + spread * normal(rng);
        v = -hjb_terminal(point);
    }
    // log-mean-exp with a shift for range safety
    const double shift = *std::max_element(exponent.begin(), exponent.end());
    double mean = 0.0;
    for (double v : exponent) mean += std::exp(v - shift);
    mean /= samples;
    double var = 0.0;
    for (double v : exponent) {
        const double dev = std::exp(v - shift) - mean;
        var += dev * dev;
    }
    var = samples > 1 ? var / (samples - 1) : 0.0;

    MonteCarloEstimate out;
    out.estimate = -(shift + std::log(mean));
    out.std_error = std::sqrt(var / samples) / mean;
    return out;
}

GeneratorPoint generator_point_from_exact(const FBSDEProblem& problem, double t, const Vector& x) {
    if (!problem.has_exact())
        throw std::logic_error("generator_point_from_exact: problem " + problem.name +
                               " has no closed-form solution");
    Graph g;
    Node states = g.variable(Matrix(x));
    Node u = problem.exact(g, t, states);
    Node z = g.grad(u, {states})[0];

    GeneratorPoint p;
    p.t = t;
    p.x = x;
    p.y = u.scalar();
    p.z = z.value();
    const Eigen::Index d = x.size();
    p.gamma.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        Node zi = slice_rows(z, i, 1);
        if (!zi.requires_grad()) {
            p.gamma.row(i).setZero();
            continue;
        }
        p.gamma.row(i) = g.grad(zi, {states})[0].value().transpose();
    }
    return p;
}

double pde_generator(const FBSDEProblem& problem, const GeneratorPoint& point) {
    const Matrix s = problem.sigma(point.t, point.x, point.y);
    const double diffusion = 0.5 * (s * s.transpose() * point.gamma).trace();
    const double advection = problem.mu(point.t, point.x, point.y, point.z).dot(point.z);
    return problem.phi(point.t, point.x, point.y, point.z) - advection - diffusion;
}

double verify_driver_mapping(const FBSDEProblem& problem, const GeneratorPoint& point) {
    if (!problem.has_exact())
        throw std::logic_error("verify_driver_mapping: problem " + problem.name +
                               " has no closed-form solution");
    constexpr double h = 1e-6;
    const double u_t = (problem.exact_value(point.t + h, point.x) -
                        problem.exact_value(point.t - h, point.x)) / (2.0 * h);
    return std::abs(u_t - pde_generator(problem, point));
}

}  // namespace deepbsde
