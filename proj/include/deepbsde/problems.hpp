#pragma once

// Forward-backward SDE benchmark problems.
//
//   dX = mu(t,X,Y,Z) dt + sigma(t,X,Y) dW,          X_0 = xi
//   dY = phi(t,X,Y,Z) dt + Z^T sigma(t,X,Y) dW,     Y_T = g(X_T)
//
// solved by Y_t = u(t, X_t), Z_t = grad_x u(t, X_t) for the semi-linear PDE
// u_t = phi - mu^T Du - 1/2 Tr[sigma sigma^T D^2u], u(T, .) = g.

#include "deepbsde/graph.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace deepbsde {

/// Structural form of sigma(t, x, y), so batched code can avoid dense d x d products.
enum class DiffusionKind {
    StateDiagonal,   // scale * diag(x)
    ScalarIdentity,  // scale * I
    General,         // arbitrary matrix from `diffusion_matrix`
};

/// Driver phi over a batch: states is d x M (data), y is 1 x M, z is d x M; returns 1 x M.
using BatchDriver = std::function<Node(Graph&, double t, const Matrix& states, Node y, Node z)>;

/// Closed-form solution over a batch: states node d x M -> 1 x M. Built from
/// graph ops so its spatial gradient and Hessian are available.
using BatchExact = std::function<Node(Graph&, double t, Node states)>;

struct FBSDEProblem {
    std::string name;
    int dim = 1;
    double horizon = 1.0;
    Vector xi;

    // Empty drift means mu == 0.
    std::function<Vector(double t, const Vector& x, double y, const Vector& z)> drift;

    DiffusionKind diffusion_kind = DiffusionKind::ScalarIdentity;
    double diffusion_scale = 1.0;
    std::function<Matrix(double t, const Vector& x, double y)> diffusion_matrix;

    BatchDriver driver;
    std::function<double(const Vector& x)> terminal;
    std::function<Vector(const Vector& x)> terminal_gradient;  // optional
    BatchExact exact;                                          // optional
    std::function<double(double t, const Vector& x)> reference;  // optional numeric oracle

    bool has_drift() const { return static_cast<bool>(drift); }
    bool has_terminal_gradient() const { return static_cast<bool>(terminal_gradient); }
    bool has_exact() const { return static_cast<bool>(exact); }
    /// True when some solution value (closed form or Monte-Carlo oracle) exists.
    bool has_reference() const { return has_exact() || static_cast<bool>(reference); }

    Vector mu(double t, const Vector& x, double y, const Vector& z) const;
    Matrix sigma(double t, const Vector& x, double y) const;
    /// sigma(t, x, y) * v without forming sigma when the structure allows.
    Vector sigma_times(double t, const Vector& x, double y, const Vector& v) const;
    double phi(double t, const Vector& x, double y, const Vector& z) const;
    double g(const Vector& x) const { return terminal(x); }
    double exact_value(double t, const Vector& x) const;
    /// Closed form when present, otherwise the numeric oracle.
    double reference_value(double t, const Vector& x) const;
};

Vector ones_vector(int d);

FBSDEProblem black_scholes(int d, double r, double sigma, double T, const Vector& xi);
FBSDEProblem hjb(int d, double T, const Vector& xi, std::uint64_t oracle_seed = 0,
                 int oracle_samples = 100000);
/// `squared_norm` selects g(x) = 1/(2 + 0.4|x|^2); false gives 1/(2 + 0.4|x|).
FBSDEProblem allen_cahn(int d, double T, const Vector& xi, bool squared_norm = true);

/// Heat equation u_t = -1/2 Tr[D^2u], u(T, x) = w^T x, with exact u = w^T x.
FBSDEProblem linear_heat(const Vector& w, double T, const Vector& xi);

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// -ln E[exp(-g(x + sqrt(2) W_{T-t}))] for the HJB terminal function.
MonteCarloEstimate hjb_exact_mc(const Vector& x, double t, double T, int samples, std::uint64_t seed);

double hjb_terminal(const Vector& x);

struct GeneratorPoint {
    double t = 0.0;
    Vector x;
    double y = 0.0;
    Vector z;
    Matrix gamma;
};

/// y = u, z = grad u and gamma = Hessian of the closed form, via the graph.
GeneratorPoint generator_point_from_exact(const FBSDEProblem& problem, double t, const Vector& x);

/// f(t,x,y,z,gamma) = phi - mu^T z - 1/2 Tr[sigma sigma^T gamma].
double pde_generator(const FBSDEProblem& problem, const GeneratorPoint& point);

/// |u_t - f| with u_t from a central difference of the closed form (step 1e-6).
double verify_driver_mapping(const FBSDEProblem& problem, const GeneratorPoint& point);

}  // namespace deepbsde
