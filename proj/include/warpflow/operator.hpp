#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "warpflow/geometry.hpp"
#include "warpflow/profile.hpp"

namespace warpflow {

// Coefficients of the reduced Lichnerowicz operator
//   D eta = eta_xx + A(x) eta_x + B(x) eta
// acting on (eta0, eta1, eta2), together with the weighted-L2 data: the scalar
// weight v1^n1 v2^n2 and the constant diagonal W = diag(1, n1, n2). A equals
// (log weight)_x, so W D is formally self-adjoint in the weighted product.
struct OperatorCoefficients {
    int n1 = 2;
    int n2 = 2;
    Field grid;
    Field A;
    std::vector<Eigen::Matrix3d> B;
    Field weight;

    std::size_t size() const { return grid.size(); }
    Eigen::Vector3d W() const { return Eigen::Vector3d(1.0, n1, n2); }
};

inline OperatorCoefficients assemble_ode_operator(const WarpedProfile& p)
{
    for (double v : p.v0)
        if (std::abs(v - 1.0) > 1e-12)
            throw std::invalid_argument("assemble_ode_operator: background must have v0 == 1");
    const double defect = ricci_flat_defect(p);
    if (defect > kRicciFlatTol)
        throw std::invalid_argument("assemble_ode_operator: profile not Ricci-flat to tolerance (defect " +
                                    std::to_string(defect) + ")");
    const double crossover = detail::series_crossover(p);
    if (p.origin.empty() && p.grid.front() < 10.0 * (p.grid[1] - p.grid[0]) && p.grid.front() < 0.1)
        throw std::invalid_argument("assemble_ode_operator: grid reaches the origin but profile has no series data");
    (void)crossover;

    OperatorCoefficients c;
    c.n1 = p.n1;
    c.n2 = p.n2;
    c.grid = p.grid;
    const std::size_t n = p.size();
    c.A.resize(n);
    c.B.resize(n);
    c.weight.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const auto g = detail::point_geometry(p, k);
        const double w1x = g.v1x / g.v1;
        const double w2x = g.v2x / g.v2;
        const double w1xx = g.v1xx / g.v1 - w1x * w1x;
        const double w2xx = g.v2xx / g.v2 - w2x * w2x;
        const double em2w1 = (p.n1 - 1) / (g.v1 * g.v1);
        const double em2w2 = (p.n2 - 1) / (g.v2 * g.v2);

        c.A[k] = p.n1 * w1x + p.n2 * w2x;
        Eigen::Matrix3d& B = c.B[k];
        B(0, 0) = -2.0 * p.n1 * w1x * w1x - 2.0 * p.n2 * w2x * w2x;
        B(0, 1) = -2.0 * p.n1 * w1xx;
        B(0, 2) = -2.0 * p.n2 * w2xx;
        B(1, 0) = -2.0 * w1xx;
        B(1, 1) = 2.0 * em2w1 - 2.0 * p.n1 * w1x * w1x;
        B(1, 2) = -2.0 * p.n2 * w1x * w2x;
        B(2, 0) = -2.0 * w2xx;
        B(2, 1) = -2.0 * p.n1 * w1x * w2x;
        B(2, 2) = 2.0 * em2w2 - 2.0 * p.n2 * w2x * w2x;
        c.weight[k] = std::pow(g.v1, p.n1) * std::pow(g.v2, p.n2);
    }
    return c;
}

// The constant matrix of the Ricci-flat cone operator
//   D eta = eta_xx + (n/x) eta_x + (1/x^2) C eta
// and its eigen-decomposition (computed numerically).
struct ConeMatrix {
    Eigen::Matrix3d C;
    Eigen::Vector3d eigenvalues;   // sorted ascending
    Eigen::Matrix3d eigenvectors;  // columns matching eigenvalues
};

inline ConeMatrix cone_matrix(int n1, int n2)
{
    if (n1 < 2 || n2 < 2) throw std::invalid_argument("cone_matrix: fiber dimensions must be >= 2");
    const double n = n1 + n2;
    ConeMatrix m;
    m.C << -n, double(n1), double(n2),
           1.0, double(n2 - 1), double(-n2),
           1.0, double(-n1), double(n1 - 1);
    m.C *= 2.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(m.C);
    std::array<int, 3> idx = {0, 1, 2};
    Eigen::Vector3d ev = es.eigenvalues().real();
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ev(a) < ev(b); });
    for (int i = 0; i < 3; ++i) {
        m.eigenvalues(i) = ev(idx[i]);
        Eigen::Vector3d v = es.eigenvectors().col(idx[i]).real();
        m.eigenvectors.col(i) = v / v.norm();
    }
    return m;
}

// Frobenius data at the regular singular origin: the limit matrix
// B0 = lim x^2 B(x), its numerically computed eigen-decomposition, the six
// characteristic exponents solving a(a-1) + n1 a + beta = 0, and the
// admissible fundamental direction (exponent 0 with nonzero third component).
//
// reference_beta0/reference_zeta0 carry values sometimes quoted for this
// matrix that fail the eigen-relation; they are reported for comparison and
// never used.
struct FrobeniusData {
    Eigen::Matrix3d B0;
    std::array<double, 6> exponents{};   // {2, -(n1+1), 0, 0, -(n1-1), -(n1-1)}
    Eigen::Vector3d computed_eigenvalues;  // ascending: {-2(n1+1), 0, 0}
    Eigen::Matrix3d computed_eigenvectors;
    Eigen::Vector3d admissible_direction;  // zeta2 = (0, 0, 1)

    double computed_beta0 = 0.0;   // -2(n1+1)
    double reference_beta0 = 0.0;  // -(2 n1 + 1)
    Eigen::Vector3d reference_zeta0;
    bool reference_beta0_consistent = false;
    bool reference_zeta0_consistent = false;
    std::vector<std::string> notes;
};

inline FrobeniusData frobenius_data(int n1)
{
    if (n1 < 2) throw std::invalid_argument("frobenius_data: n1 must be >= 2");
    FrobeniusData f;
    f.B0 << -2.0 * n1, 2.0 * n1, 0.0,
            2.0, -2.0, 0.0,
            0.0, 0.0, 0.0;

    Eigen::EigenSolver<Eigen::Matrix3d> es(f.B0);
    Eigen::Vector3d ev = es.eigenvalues().real();
    std::array<int, 3> idx = {0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ev(a) < ev(b); });
    for (int i = 0; i < 3; ++i) {
        f.computed_eigenvalues(i) = ev(idx[i]);
        Eigen::Vector3d v = es.eigenvectors().col(idx[i]).real();
        f.computed_eigenvectors.col(i) = v / v.norm();
    }

    auto indicial_roots = [n1](double beta) {
        const double disc = (n1 - 1.0) * (n1 - 1.0) - 4.0 * beta;
        const double s = std::sqrt(std::max(0.0, disc));
        return std::array<double, 2>{(-(n1 - 1.0) + s) / 2.0, (-(n1 - 1.0) - s) / 2.0};
    };
    const auto r0 = indicial_roots(f.computed_eigenvalues(0));  // beta = -2(n1+1)
    const auto r1 = indicial_roots(0.0);
    f.exponents = {r0[0], r0[1], r1[0], r1[0], r1[1], r1[1]};

    f.admissible_direction = Eigen::Vector3d(0.0, 0.0, 1.0);
    f.computed_beta0 = f.computed_eigenvalues(0);
    f.reference_beta0 = -(2.0 * n1 + 1.0);
    f.reference_zeta0 = Eigen::Vector3d(2.0 * n1, -1.0, 0.0);
    f.reference_beta0_consistent =
        std::abs(f.reference_beta0 - f.computed_beta0) < 1e-10;
    f.reference_zeta0_consistent =
        (f.B0 * f.reference_zeta0 - f.reference_beta0 * f.reference_zeta0).norm() < 1e-10 * f.reference_zeta0.norm();
    if (!f.reference_beta0_consistent)
        f.notes.push_back("reference eigenvalue -(2 n1 + 1) does not match the computed -2(n1 + 1); "
                          "using the computed decomposition");
    if (!f.reference_zeta0_consistent)
        f.notes.push_back("reference eigenvector (2 n1, -1, 0) fails B0 z = beta z for either eigenvalue; "
                          "computed eigenvector is proportional to (n1, -1, 0)");
    return f;
}

// Weighted L2 pairing int eta^T W etat weight dx (midpoint rule on the
// staggered grid; identical to the discrete mass matrix of spectrum.hpp).
inline double weighted_inner_product(const TensorPerturbation& h, const TensorPerturbation& ht,
                                     const OperatorCoefficients& c)
{
    if (h.size() != c.size() || ht.size() != c.size())
        throw std::invalid_argument("weighted_inner_product: grid mismatch");
    const double dx = grid_spacing(c.grid);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
        s += c.weight[i] * (h.eta0[i] * ht.eta0[i] + c.n1 * h.eta1[i] * ht.eta1[i] +
                            c.n2 * h.eta2[i] * ht.eta2[i]);
    return s * dx;
}

inline double weighted_norm(const TensorPerturbation& h, const OperatorCoefficients& c)
{
    return std::sqrt(std::max(0.0, weighted_inner_product(h, h, c)));
}

// discriminant n^2 - 10 n + 9 + 4 mu of the equidimensional model equation
inline double oscillatory_discriminant(int n, double mu)
{
    return static_cast<double>(n) * n - 10.0 * n + 9.0 + 4.0 * mu;
}

// Oscillation rate: phi = (x/R)^alpha sin(b log(x/R)) solves the model
// equation phi'' + (n/x) phi' + (2(n-1)/x^2) phi = (mu/x^2) phi with
// alpha = (1-n)/2 and b = sqrt(|disc|)/2.
inline double oscillatory_rate(int n, double mu)
{
    const double disc = oscillatory_discriminant(n, mu);
    if (disc >= 0.0) throw std::invalid_argument("oscillatory_rate: discriminant not negative");
    return 0.5 * std::sqrt(-disc);
}

// Compactly supported approximate eigenvector eta = phi * (0, n2, -n1) with
// support [R, e^(pi/b) R]; continuous and vanishing at both support endpoints.
inline TensorPerturbation oscillatory_test_tensor(const OperatorCoefficients& c, double R, double mu)
{
    const int n = c.n1 + c.n2;
    if (n < 4 || n > 8)
        throw std::invalid_argument("oscillatory_test_tensor: requires 4 <= n1+n2 <= 8 "
                                    "(discriminant sign flips outside)");
    if (!(mu > 0.0) || !(mu < 1.75))
        throw std::invalid_argument("oscillatory_test_tensor: mu must lie in (0, 7/4)");
    const double b = oscillatory_rate(n, mu);
    const double alpha = (1.0 - n) / 2.0;
    const double outer = std::exp(M_PI / b) * R;
    if (R < c.grid.front() || outer > c.grid.back())
        throw std::invalid_argument("oscillatory_test_tensor: support [" + std::to_string(R) + ", " +
                                    std::to_string(outer) + "] exceeds the grid");
    TensorPerturbation t = TensorPerturbation::zero(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double x = c.grid[i];
        if (x < R || x > outer) continue;
        const double r = x / R;
        const double phi = std::pow(r, alpha) * std::sin(b * std::log(r));
        t.eta1[i] = c.n2 * phi;
        t.eta2[i] = -c.n1 * phi;
    }
    return t;
}

// Raw centered-difference application of D (one-sided second-order stencils in
// the two end cells). The symmetric flux-form route lives in spectrum.hpp;
// the two agree at O(dx^2).
inline TensorPerturbation apply_operator_fd(const OperatorCoefficients& c, const TensorPerturbation& h)
{
    if (h.size() != c.size()) throw std::invalid_argument("apply_operator_fd: grid mismatch");
    if (!is_uniform(c.grid)) throw std::invalid_argument("apply_operator_fd: uniform grid required");
    const std::size_t n = c.size();
    const double dx = grid_spacing(c.grid);
    auto d1 = [&](const Field& f, std::size_t i) {
        if (i == 0) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
        if (i == n - 1) return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
        return (f[i + 1] - f[i - 1]) / (2.0 * dx);
    };
    auto d2 = [&](const Field& f, std::size_t i) {
        if (i == 0) return (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (dx * dx);
        if (i == n - 1) return (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / (dx * dx);
        return (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (dx * dx);
    };
    TensorPerturbation out = TensorPerturbation::zero(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d eta(h.eta0[i], h.eta1[i], h.eta2[i]);
        const Eigen::Vector3d Beta = c.B[i] * eta;
        out.eta0[i] = d2(h.eta0, i) + c.A[i] * d1(h.eta0, i) + Beta(0);
        out.eta1[i] = d2(h.eta1, i) + c.A[i] * d1(h.eta1, i) + Beta(1);
        out.eta2[i] = d2(h.eta2, i) + c.A[i] * d1(h.eta2, i) + Beta(2);
    }
    return out;
}

} // namespace warpflow
