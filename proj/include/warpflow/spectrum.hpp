#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "warpflow/numerics.hpp"
#include "warpflow/operator.hpp"

namespace warpflow {

enum class EndBc { Dirichlet, Even };

// Per-component boundary treatment on the staggered grid. Dirichlet at a face
// eliminates an odd-reflected ghost, Even a mirrored one. pinned lists
// (cell, component) degrees of freedom forced to zero; the warped default pins
// components 0 and 1 in the first cell, implementing eta0(0) = eta1(0) = 0
// (admissible solutions are O(x^2) there).
struct BoundarySpec {
    std::vector<EndBc> origin;
    std::vector<EndBc> outer;
    std::vector<std::pair<std::size_t, int>> pinned;

    static BoundarySpec warped_default()
    {
        BoundarySpec b;
        b.origin = {EndBc::Dirichlet, EndBc::Dirichlet, EndBc::Even};
        b.outer = {EndBc::Dirichlet, EndBc::Dirichlet, EndBc::Dirichlet};
        b.pinned = {{0, 0}, {0, 1}};
        return b;
    }
    static BoundarySpec scalar_dirichlet()
    {
        BoundarySpec b;
        b.origin = {EndBc::Dirichlet};
        b.outer = {EndBc::Dirichlet};
        return b;
    }
};

// Block-tridiagonal generalized symmetric eigenproblem K u = lambda M u with
// diagonal mass M (cell weight times W). K is the flux-form discretization of
// the weighted operator; pinned DOFs are decoupled at eigenvalue pin_value.
struct SpectralProblem {
    int block = 3;           // components per cell
    Field grid;
    Field weight;            // scalar weight samples
    Eigen::VectorXd Wdiag;   // constant component weights
    std::vector<Eigen::MatrixXd> Kdiag;  // N blocks
    std::vector<Eigen::MatrixXd> Koff;   // N-1 blocks, coupling i <-> i+1 (symmetric pencil)
    std::vector<Eigen::VectorXd> Mdiag;  // N diagonal mass blocks
    std::vector<std::pair<std::size_t, int>> pinned;
    double pin_value = -1e6;

    std::size_t cells() const { return grid.size(); }
    std::size_t dofs() const { return grid.size() * static_cast<std::size_t>(block); }

    bool is_pinned(std::size_t cell, int comp) const
    {
        for (const auto& [c, k] : pinned)
            if (c == cell && k == comp) return true;
        return false;
    }

    double max_offdiag_asymmetry() const
    {
        double worst = 0.0;
        for (const auto& D : Kdiag) worst = std::max(worst, (D - D.transpose()).cwiseAbs().maxCoeff());
        return worst;
    }
};

// Generic staggered flux-form assembly. Face weights are arithmetic means of
// the neighbouring cell weights; the two boundary faces use clamped linear
// extrapolation (exactly 0 when the weight vanishes at the origin like x^n1).
inline SpectralProblem build_spectral_problem(const Field& grid, const Field& weight,
                                              const Eigen::VectorXd& Wdiag,
                                              const std::vector<Eigen::MatrixXd>& Bblocks,
                                              const BoundarySpec& bc)
{
    const std::size_t n = grid.size();
    const int C = static_cast<int>(Wdiag.size());
    if (n < 4) throw std::invalid_argument("build_spectral_problem: need >= 4 cells");
    if (!is_uniform(grid)) throw std::invalid_argument("build_spectral_problem: nonuniform grid");
    if (weight.size() != n || Bblocks.size() != n)
        throw std::invalid_argument("build_spectral_problem: sample count mismatch");
    if (static_cast<int>(bc.origin.size()) != C || static_cast<int>(bc.outer.size()) != C)
        throw std::invalid_argument("build_spectral_problem: boundary spec size mismatch");
    const double dx = grid_spacing(grid);
    for (double w : weight)
        if (!(w > 0.0)) throw numerical_error("build_spectral_problem: weight underflow at a cell");

    Field face(n + 1);
    for (std::size_t f = 1; f < n; ++f) face[f] = 0.5 * (weight[f - 1] + weight[f]);
    face[0] = std::max(0.0, 1.5 * weight[0] - 0.5 * weight[1]);
    face[n] = std::max(0.0, 1.5 * weight[n - 1] - 0.5 * weight[n - 2]);

    SpectralProblem sp;
    sp.block = C;
    sp.grid = grid;
    sp.weight = weight;
    sp.Wdiag = Wdiag;
    sp.pinned = bc.pinned;
    sp.Kdiag.assign(n, Eigen::MatrixXd::Zero(C, C));
    sp.Koff.assign(n - 1, Eigen::MatrixXd::Zero(C, C));
    sp.Mdiag.assign(n, Eigen::VectorXd::Zero(C));

    for (std::size_t i = 0; i < n; ++i) {
        Eigen::MatrixXd WB = Wdiag.asDiagonal() * Bblocks[i];
        WB = 0.5 * (WB + WB.transpose().eval());  // symmetric up to round-off by construction
        sp.Kdiag[i] = dx * weight[i] * WB;
        for (int c = 0; c < C; ++c) {
            const double Wc = Wdiag(c);
            double left, right;
            if (i == 0)
                left = (bc.origin[c] == EndBc::Dirichlet) ? 2.0 * face[0] : 0.0;
            else
                left = face[i];
            if (i == n - 1)
                right = (bc.outer[c] == EndBc::Dirichlet) ? 2.0 * face[n] : 0.0;
            else
                right = face[i + 1];
            sp.Kdiag[i](c, c) -= Wc * (left + right) / dx;
            if (i + 1 < n) sp.Koff[i](c, c) = Wc * face[i + 1] / dx;
            sp.Mdiag[i](c) = dx * weight[i] * Wc;
        }
    }

    // decouple pinned DOFs at the sentinel eigenvalue
    for (const auto& [cell, comp] : sp.pinned) {
        if (cell >= n || comp >= C) throw std::invalid_argument("build_spectral_problem: pin out of range");
        for (int c = 0; c < C; ++c) {
            sp.Kdiag[cell](comp, c) = 0.0;
            sp.Kdiag[cell](c, comp) = 0.0;
        }
        if (cell > 0) sp.Koff[cell - 1].col(comp).setZero();
        if (cell + 1 < n) sp.Koff[cell].row(comp).setZero();
        sp.Kdiag[cell](comp, comp) = sp.pin_value * sp.Mdiag[cell](comp);
    }
    return sp;
}

// Discretize the assembled warped operator with the given boundary spec.
inline SpectralProblem discretize(const OperatorCoefficients& c, const BoundarySpec& bc = BoundarySpec::warped_default())
{
    std::vector<Eigen::MatrixXd> B(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) B[i] = c.B[i];
    return build_spectral_problem(c.grid, c.weight, c.W(), B, bc);
}

// Scalar helper for model problems: operator u'' + (w'/w) u' + b(x) u with
// weight w.
inline SpectralProblem discretize_scalar(const Field& grid, const Field& weight, const Field& b,
                                         const BoundarySpec& bc = BoundarySpec::scalar_dirichlet())
{
    std::vector<Eigen::MatrixXd> B(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        B[i] = Eigen::MatrixXd::Zero(1, 1);
        B[i](0, 0) = b[i];
    }
    return build_spectral_problem(grid, weight, Eigen::VectorXd::Ones(1), B, bc);
}

// ---------------------------------------------------------------------------
// Block LDL^T of K - sigma M: inertia (Sylvester) for spectrum slicing and
// forward/back solves for shift-invert iteration.
// ---------------------------------------------------------------------------
class BlockTridiagonalLDLT {
public:
    BlockTridiagonalLDLT(const SpectralProblem& sp, double sigma) : sp_(&sp)
    {
        const std::size_t n = sp.cells();
        const int C = sp.block;
        inv_.resize(n);
        neg_ = 0;
        Eigen::MatrixXd Di(C, C);
        for (std::size_t i = 0; i < n; ++i) {
            Di = sp.Kdiag[i];
            Di.diagonal() -= sigma * sp.Mdiag[i];
            // Schur complement against the previous pivot block
            if (i > 0) Di -= sp.Koff[i - 1].transpose() * (inv_[i - 1] * sp.Koff[i - 1]);
            Di = 0.5 * (Di + Di.transpose().eval());
            neg_ += negative_eigen_count(Di);
            inv_[i] = Di.inverse();
        }
    }

    // number of pencil eigenvalues strictly below sigma (Sylvester inertia)
    int negative_count() const { return neg_; }

    // solve (K - sigma M) u = r by block Thomas elimination
    Eigen::VectorXd solve(const Eigen::VectorXd& r) const
    {
        const std::size_t n = sp_->cells();
        const int C = sp_->block;
        std::vector<Eigen::VectorXd> z(n);
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = r.segment(i * C, C);
            if (i > 0) z[i] -= sp_->Koff[i - 1].transpose() * (inv_[i - 1] * z[i - 1]);
        }
        Eigen::VectorXd u(n * C);
        Eigen::VectorXd ui = inv_[n - 1] * z[n - 1];
        u.segment((n - 1) * C, C) = ui;
        for (std::size_t i = n - 1; i-- > 0;) {
            ui = inv_[i] * (z[i] - sp_->Koff[i] * ui);
            u.segment(i * C, C) = ui;
        }
        return u;
    }

private:
    static int negative_eigen_count(const Eigen::MatrixXd& S)
    {
        if (S.rows() == 1) return S(0, 0) < 0.0 ? 1 : 0;
        if (S.rows() == 3) {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
            es.computeDirect(Eigen::Matrix3d(S), Eigen::EigenvaluesOnly);
            int c = 0;
            for (int i = 0; i < 3; ++i)
                if (es.eigenvalues()(i) < 0.0) ++c;
            return c;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
        int c = 0;
        for (int i = 0; i < S.rows(); ++i)
            if (es.eigenvalues()(i) < 0.0) ++c;
        return c;
    }

    const SpectralProblem* sp_;
    std::vector<Eigen::MatrixXd> inv_;
    int neg_ = 0;
};

inline int count_eigenvalues_below(const SpectralProblem& sp, double sigma)
{
    return BlockTridiagonalLDLT(sp, sigma).negative_count();
}

// eigenvalues in the half-open interval (a, b]
inline int count_eigenvalues_in(const SpectralProblem& sp, double a, double b)
{
    if (!(b >= a)) throw std::invalid_argument("count_eigenvalues_in: need b >= a");
    return count_eigenvalues_below(sp, b) - count_eigenvalues_below(sp, a);
}

namespace detail {

inline Eigen::VectorXd apply_K(const SpectralProblem& sp, const Eigen::VectorXd& u)
{
    const std::size_t n = sp.cells();
    const int C = sp.block;
    Eigen::VectorXd r(n * C);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd s = sp.Kdiag[i] * u.segment(i * C, C);
        if (i > 0) s += sp.Koff[i - 1].transpose() * u.segment((i - 1) * C, C);
        if (i + 1 < n) s += sp.Koff[i] * u.segment((i + 1) * C, C);
        r.segment(i * C, C) = s;
    }
    return r;
}

inline Eigen::VectorXd apply_M(const SpectralProblem& sp, const Eigen::VectorXd& u)
{
    const std::size_t n = sp.cells();
    const int C = sp.block;
    Eigen::VectorXd r(n * C);
    for (std::size_t i = 0; i < n; ++i)
        r.segment(i * C, C) = sp.Mdiag[i].cwiseProduct(u.segment(i * C, C));
    return r;
}

inline double m_dot(const SpectralProblem& sp, const Eigen::VectorXd& a, const Eigen::VectorXd& b)
{
    return a.dot(apply_M(sp, b));
}

inline void zero_pinned(const SpectralProblem& sp, Eigen::VectorXd& u)
{
    for (const auto& [cell, comp] : sp.pinned) u(cell * sp.block + comp) = 0.0;
}

// Gershgorin-type upper bound for the pencil spectrum
inline double upper_bound(const SpectralProblem& sp)
{
    const std::size_t n = sp.cells();
    const int C = sp.block;
    double bound = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < C; ++c) {
            double row = sp.Kdiag[i](c, c);
            for (int d = 0; d < C; ++d)
                if (d != c) row += std::abs(sp.Kdiag[i](c, d));
            if (i > 0) row += sp.Koff[i - 1].col(c).cwiseAbs().sum();
            if (i + 1 < n) row += sp.Koff[i].row(c).cwiseAbs().sum();
            bound = std::max(bound, row / sp.Mdiag[i](c));
        }
    }
    return bound + 1.0;
}

} // namespace detail

struct RawEigenPair {
    double lambda = 0.0;
    Eigen::VectorXd vector;  // M-normalized
    double residual = 0.0;   // ||K u - lambda M u||_2 / ||M u||_2
};

// k largest pencil eigenvalues by inertia bisection + shift-invert inverse
// iteration on the block-tridiagonal factorization. Deterministic: fixed
// start vector, fixed shift sequence.
inline std::vector<RawEigenPair> spectrum_raw(const SpectralProblem& sp, int k,
                                              double bisect_rel_tol = 1e-12)
{
    if (k < 1) throw std::invalid_argument("spectrum_raw: k must be >= 1");
    const std::size_t nd = sp.dofs();
    if (static_cast<std::size_t>(k) > nd) throw std::invalid_argument("spectrum_raw: k exceeds problem size");

    const double top = detail::upper_bound(sp);
    auto count_above = [&](double sigma) {
        return static_cast<int>(nd) - count_eigenvalues_below(sp, sigma);
    };

    // bracket the k-th largest from above; pinned DOFs sit at pin_value and are
    // never bracketed as long as k < number of active DOFs
    double lo = top - 1.0, step = std::max(1.0, std::abs(top) * 0.1);
    int guard = 0;
    while (count_above(lo) < k) {
        lo -= step;
        step *= 2.0;
        if (++guard > 120 || lo < sp.pin_value * 0.5)
            throw numerical_error("spectrum_raw: failed to bracket requested eigenvalues");
    }

    // j-th largest eigenvalue by bisection on count_above
    std::vector<double> lambdas(k);
    for (int j = 1; j <= k; ++j) {
        double a = lo, b = top;  // count_above(a) >= j > count_above(b)
        while (b - a > bisect_rel_tol * std::max(1.0, std::abs(a) + std::abs(b))) {
            const double mid = 0.5 * (a + b);
            if (count_above(mid) >= j)
                a = mid;
            else
                b = mid;
        }
        lambdas[j - 1] = 0.5 * (a + b);
    }

    // inverse iteration per eigenvalue, M-orthogonalizing within clusters
    std::vector<RawEigenPair> out(k);
    for (int j = 0; j < k; ++j) {
        const double lam = lambdas[j];
        const double width = std::max(1e-11 * std::max(1.0, std::abs(lam)), 1e-13);
        BlockTridiagonalLDLT fac(sp, lam + width);

        Eigen::VectorXd y(nd);
        for (std::size_t i = 0; i < nd; ++i) y(i) = 1.0 + 0.5 * std::sin(3.7 * static_cast<double>(i + 1));
        detail::zero_pinned(sp, y);
        y /= std::sqrt(detail::m_dot(sp, y, y));

        RawEigenPair pair;
        for (int it = 0; it < 60; ++it) {
            Eigen::VectorXd z = fac.solve(detail::apply_M(sp, y));
            detail::zero_pinned(sp, z);
            // deflate against previously found vectors at (numerically) the same shift
            for (int m = 0; m < j; ++m)
                if (std::abs(out[m].lambda - lam) < 1e-6 * std::max(1.0, std::abs(lam)))
                    z -= detail::m_dot(sp, out[m].vector, z) * out[m].vector;
            const double nz = std::sqrt(std::max(detail::m_dot(sp, z, z), 1e-300));
            z /= nz;
            const double drift = std::min((z - y).norm(), (z + y).norm());
            y = z;
            if (drift < 1e-13 && it >= 2) break;
        }
        const Eigen::VectorXd Ky = detail::apply_K(sp, y);
        const Eigen::VectorXd My = detail::apply_M(sp, y);
        const double rho = y.dot(Ky) / y.dot(My);
        pair.lambda = rho;
        pair.vector = y;
        pair.residual = (Ky - rho * My).norm() / My.norm();
        out[j] = std::move(pair);
    }
    std::sort(out.begin(), out.end(), [](const RawEigenPair& a, const RawEigenPair& b) { return a.lambda > b.lambda; });
    return out;
}

// Dense cross-check route (Eigen generalized solver); N restricted.
inline std::vector<RawEigenPair> spectrum_dense(const SpectralProblem& sp, int k)
{
    const std::size_t nd = sp.dofs();
    if (nd > 4500) throw std::invalid_argument("spectrum_dense: problem too large for the dense fallback");
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nd, nd);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nd, nd);
    const int C = sp.block;
    for (std::size_t i = 0; i < sp.cells(); ++i) {
        K.block(i * C, i * C, C, C) = sp.Kdiag[i];
        M.block(i * C, i * C, C, C) = sp.Mdiag[i].asDiagonal();
        if (i + 1 < sp.cells()) {
            K.block(i * C, (i + 1) * C, C, C) = sp.Koff[i];
            K.block((i + 1) * C, i * C, C, C) = sp.Koff[i].transpose();
        }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, M);
    std::vector<RawEigenPair> out;
    for (int j = 0; j < k; ++j) {
        RawEigenPair p;
        const std::size_t idx = nd - 1 - static_cast<std::size_t>(j);
        p.lambda = es.eigenvalues()(idx);
        p.vector = es.eigenvectors().col(idx);
        const Eigen::VectorXd Ky = detail::apply_K(sp, p.vector);
        const Eigen::VectorXd My = detail::apply_M(sp, p.vector);
        p.residual = (Ky - p.lambda * My).norm() / My.norm();
        out.push_back(std::move(p));
    }
    return out;
}

// u^T K u / u^T M u (pinned DOFs zeroed first)
inline double rayleigh_quotient(const SpectralProblem& sp, const Eigen::VectorXd& u)
{
    Eigen::VectorXd v = u;
    detail::zero_pinned(sp, v);
    return v.dot(detail::apply_K(sp, v)) / v.dot(detail::apply_M(sp, v));
}

inline Eigen::VectorXd tensor_to_vector(const TensorPerturbation& t)
{
    const std::size_t n = t.size();
    Eigen::VectorXd u(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        u(3 * i) = t.eta0[i];
        u(3 * i + 1) = t.eta1[i];
        u(3 * i + 2) = t.eta2[i];
    }
    return u;
}

inline TensorPerturbation vector_to_tensor(const Eigen::VectorXd& u)
{
    const std::size_t n = static_cast<std::size_t>(u.size()) / 3;
    TensorPerturbation t = TensorPerturbation::zero(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.eta0[i] = u(3 * i);
        t.eta1[i] = u(3 * i + 1);
        t.eta2[i] = u(3 * i + 2);
    }
    return t;
}

// M^-1 K u: the symmetric flux-form application of the operator (the w-form
// route of the cross-validation pair).
inline TensorPerturbation apply_operator_flux(const SpectralProblem& sp, const TensorPerturbation& h)
{
    if (sp.block != 3) throw std::invalid_argument("apply_operator_flux: 3-component problem required");
    Eigen::VectorXd u = tensor_to_vector(h);
    detail::zero_pinned(sp, u);
    Eigen::VectorXd r = detail::apply_K(sp, u);
    for (std::size_t i = 0; i < sp.dofs(); ++i) {
        const double m = sp.Mdiag[i / 3](static_cast<int>(i % 3));
        r(i) /= m;
    }
    detail::zero_pinned(sp, r);
    return vector_to_tensor(r);
}

// Eigenvalue with eigentensor and diagnostics: weighted-norm 1, sign fixed by
// the eta2 extrapolation at the origin, exponential decay fit on the outer
// half (points below the solver noise floor and the final two cells excluded).
struct EigenPair {
    double lambda = 0.0;
    TensorPerturbation tensor;
    double decay_theta = 0.0;
    double decay_r2 = 0.0;
    double multiplicity_gap = 0.0;
    double residual = 0.0;
};

inline std::vector<EigenPair> compute_spectrum(const SpectralProblem& sp, const OperatorCoefficients& coeffs,
                                               int k)
{
    if (sp.block != 3) throw std::invalid_argument("compute_spectrum: 3-component problem required");
    // one extra mode so the k-th has a two-sided multiplicity gap
    const int kk = std::min<int>(k + 1, static_cast<int>(sp.dofs()));
    std::vector<RawEigenPair> raw = spectrum_raw(sp, kk);

    std::vector<EigenPair> out;
    for (int j = 0; j < k && j < static_cast<int>(raw.size()); ++j) {
        EigenPair p;
        p.lambda = raw[j].lambda;
        p.residual = raw[j].residual;
        TensorPerturbation t = vector_to_tensor(raw[j].vector);

        // sign: eta2 extrapolated to x = 0 must be positive
        const double eta2_origin = 1.5 * t.eta2[0] - 0.5 * t.eta2[1];
        double sign = eta2_origin >= 0.0 ? 1.0 : -1.0;
        if (eta2_origin == 0.0) sign = max_abs(t.eta2) > 0 ? 1.0 : sign;
        const double nrm = weighted_norm(t, coeffs);
        for (std::size_t i = 0; i < t.size(); ++i) {
            t.eta0[i] *= sign / nrm;
            t.eta1[i] *= sign / nrm;
            t.eta2[i] *= sign / nrm;
        }

        // exponential decay fit of the pointwise norm on [L/2, L]
        Field xs, ls;
        double peak = 0.0;
        Field ptnorm(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            ptnorm[i] = std::sqrt(t.eta0[i] * t.eta0[i] + coeffs.n1 * t.eta1[i] * t.eta1[i] +
                                  coeffs.n2 * t.eta2[i] * t.eta2[i]);
            peak = std::max(peak, ptnorm[i]);
        }
        const double floor = peak * 1e-10;
        const double L = sp.grid.back();
        for (std::size_t i = 0; i + 2 < t.size(); ++i) {
            if (sp.grid[i] < 0.5 * L) continue;
            if (ptnorm[i] < floor) continue;
            xs.push_back(sp.grid[i]);
            ls.push_back(std::log(ptnorm[i]));
        }
        if (xs.size() >= 4) {
            const LineFit f = fit_line(xs, ls);
            p.decay_theta = -f.slope;
            p.decay_r2 = f.r_squared;
        }
        p.tensor = std::move(t);
        out.push_back(std::move(p));
    }

    for (int j = 0; j < static_cast<int>(out.size()); ++j) {
        double gap = 1e300;
        for (int m = 0; m < static_cast<int>(raw.size()); ++m)
            if (m != j) gap = std::min(gap, std::abs(raw[m].lambda - out[j].lambda));
        out[j].multiplicity_gap = gap;
    }
    return out;
}

} // namespace warpflow
