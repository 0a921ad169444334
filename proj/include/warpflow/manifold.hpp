#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "warpflow/flow.hpp"
#include "warpflow/numerics.hpp"
#include "warpflow/spectrum.hpp"

namespace warpflow {

// Map f(x) = T x + g(x) with hyperbolic linearization T = T_s (+) T_u at the
// fixed point 0, in coordinates where the splitting bounds hold with constant
// 1 (adapted norm): ||T_s|| < a and all singular values of T_u >= a for some
// a > 1. State ordering is [stable; unstable]. g must satisfy g(0) = 0,
// dg(0) = 0; its Lipschitz constant stays small within neighborhood_radius.
struct HyperbolicMapProblem {
    int dim_s = 0;
    int dim_u = 0;
    Eigen::MatrixXd T_s;
    Eigen::MatrixXd T_u;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> g;
    double a = 0.0;
    double neighborhood_radius = 1.0;

    int dim() const { return dim_s + dim_u; }
    Eigen::VectorXd stable(const Eigen::VectorXd& x) const { return x.head(dim_s); }
    Eigen::VectorXd unstable(const Eigen::VectorXd& x) const { return x.tail(dim_u); }

    Eigen::VectorXd apply_T(const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd y(dim());
        if (dim_s > 0) y.head(dim_s) = T_s * x.head(dim_s);
        if (dim_u > 0) y.tail(dim_u) = T_u * x.tail(dim_u);
        return y;
    }

    Eigen::VectorXd f(const Eigen::VectorXd& x) const { return apply_T(x) + g(x); }

    void validate() const
    {
        if (dim_s < 0 || dim_u < 1) throw std::invalid_argument("HyperbolicMapProblem: need dim_u >= 1");
        if (!(a > 1.0)) throw std::invalid_argument("HyperbolicMapProblem: splitting rate a must exceed 1");
        if (dim_s > 0) {
            const double ns = T_s.jacobiSvd().singularValues()(0);
            if (!(ns < a))
                throw std::invalid_argument("HyperbolicMapProblem: ||T_s|| = " + std::to_string(ns) +
                                            " not below a (norm not adapted)");
        }
        const Eigen::VectorXd su = T_u.jacobiSvd().singularValues();
        if (!(su(su.size() - 1) >= a))
            throw std::invalid_argument("HyperbolicMapProblem: smallest singular value of T_u below a");
        if (!g) throw std::invalid_argument("HyperbolicMapProblem: missing nonlinear remainder g");
    }
};

// Backward orbit x_{-depth..0} with x_i = f(x_{i-1}) to solver tolerance and
// geometric decay ||x_i|| <= C a^i.
struct AncientOrbit {
    int depth = 0;
    std::vector<Eigen::VectorXd> points;  // points[j] is x_{j - depth}
    double weighted_norm = 0.0;           // sup_i a^{-i} ||x_i||
    double residual = 0.0;                // max_i ||x_i - f(x_{i-1})||
    double contraction = 0.0;             // last observed iteration factor

    const Eigen::VectorXd& x(int i) const { return points[static_cast<std::size_t>(i + depth)]; }
};

using Sequence = std::vector<Eigen::VectorXd>;  // same indexing as AncientOrbit

namespace detail {

inline double weighted_seq_norm(const Sequence& seq, double a)
{
    const int depth = static_cast<int>(seq.size()) - 1;
    double s = 0.0;
    for (int j = 0; j <= depth; ++j) {
        const int i = j - depth;
        s = std::max(s, std::pow(a, -i) * seq[j].norm());
    }
    return s;
}

inline int stable_tail_length(const HyperbolicMapProblem& p, int depth)
{
    if (p.dim_s == 0) return 0;
    const double r = p.T_s.jacobiSvd().singularValues()(0) / p.a;
    if (r <= 0.0) return 1;
    if (r >= 1.0) return depth;  // cannot happen after validate()
    return std::min(depth + 64, static_cast<int>(std::ceil(std::log(1e-14) / std::log(r))) + 1);
}

} // namespace detail

// The correction map of the sequence-space fixed point:
//   y_i = ( -sum_{j>=0} T_s^j g^s(x_{i-j-1}) ) (+) ( sum_{j=1}^{|i|} T_u^{-j} g^u(x_{i+j-1}) ),
// so that orbits solve x_i + y_i = 0 (+) T_u^i v. The stable tail is truncated
// once (||T_s||/a)^j underflows the fixed 1e-14 budget; entries before the
// stored depth decay geometrically and count as zero.
inline Sequence upsilon_map(const HyperbolicMapProblem& p, const Sequence& seq)
{
    const int depth = static_cast<int>(seq.size()) - 1;
    if (depth < 0) throw std::invalid_argument("upsilon_map: empty sequence");
    if (detail::weighted_seq_norm(seq, p.a) > p.neighborhood_radius)
        throw numerical_error("upsilon_map: sequence escaped the validity neighborhood");

    // cache g along the sequence
    std::vector<Eigen::VectorXd> gx(seq.size());
    for (std::size_t j = 0; j < seq.size(); ++j) gx[j] = p.g(seq[j]);

    const int J = detail::stable_tail_length(p, depth);
    const Eigen::MatrixXd Tu_inv = p.dim_u > 0 ? p.T_u.inverse() : Eigen::MatrixXd();

    Sequence y(seq.size(), Eigen::VectorXd::Zero(p.dim()));
    for (int i = -depth; i <= 0; ++i) {
        Eigen::VectorXd yi = Eigen::VectorXd::Zero(p.dim());
        if (p.dim_s > 0) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.dim_s);
            Eigen::MatrixXd Tj = Eigen::MatrixXd::Identity(p.dim_s, p.dim_s);
            for (int j = 0; j <= J; ++j) {
                const int idx = i - j - 1;
                if (idx >= -depth) acc += Tj * gx[static_cast<std::size_t>(idx + depth)].head(p.dim_s);
                if (idx - 1 < -depth && j > 2) break;  // everything further back is zero
                Tj = p.T_s * Tj;
            }
            yi.head(p.dim_s) = -acc;
        }
        if (p.dim_u > 0) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.dim_u);
            Eigen::MatrixXd Tmj = Tu_inv;
            for (int j = 1; j <= -i; ++j) {
                const int idx = i + j - 1;
                acc += Tmj * gx[static_cast<std::size_t>(idx + depth)].tail(p.dim_u);
                Tmj = Tu_inv * Tmj;
            }
            yi.tail(p.dim_u) = acc;
        }
        y[static_cast<std::size_t>(i + depth)] = std::move(yi);
    }
    return y;
}

struct SolveOptions {
    double damping = 0.5;
    int max_iterations = 400;
    double tolerance = 1e-13;
};

// Damped fixed-point solve of the pair equations for the ancient orbit with
// pi^u(x_0) = v. Seeds with the linear orbit x_i = (0, T_u^i v); certifies its
// own contraction and throws when the iteration fails to contract.
inline AncientOrbit solve_ancient_orbit(const HyperbolicMapProblem& p, const Eigen::VectorXd& v, int depth,
                                        const SolveOptions& opt = {})
{
    p.validate();
    if (v.size() != p.dim_u) throw std::invalid_argument("solve_ancient_orbit: v must live in the unstable factor");
    if (depth < 2) throw std::invalid_argument("solve_ancient_orbit: depth must be >= 2");

    const Eigen::MatrixXd Tu_inv = p.T_u.inverse();

    // inhomogeneous term (0, T_u^i v) and linear seed
    Sequence rhs(static_cast<std::size_t>(depth) + 1, Eigen::VectorXd::Zero(p.dim()));
    {
        Eigen::VectorXd ui = v;
        for (int i = 0; i >= -depth; --i) {
            rhs[static_cast<std::size_t>(i + depth)].tail(p.dim_u) = ui;
            ui = Tu_inv * ui;
        }
    }
    Sequence x = rhs;

    double prev_delta = -1.0;
    double q = 0.0;
    bool converged = false;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Sequence y = upsilon_map(p, x);
        double delta = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const Eigen::VectorXd target = rhs[j] - y[j];
            const Eigen::VectorXd step = target - x[j];
            const int i = static_cast<int>(j) - depth;
            delta = std::max(delta, std::pow(p.a, -i) * step.norm());
            x[j] += opt.damping * step;
        }
        if (prev_delta > 0.0) q = delta / prev_delta;
        prev_delta = delta;
        const double scale = std::max(1.0, detail::weighted_seq_norm(x, p.a));
        if (delta < opt.tolerance * scale) {
            converged = true;
            break;
        }
        if (it > 8 && q >= 1.0)
            throw numerical_error("solve_ancient_orbit: iteration not contracting (factor " +
                                  std::to_string(q) + "); ||v|| too large for the validity region");
    }
    if (!converged)
        throw numerical_error("solve_ancient_orbit: no convergence in " +
                              std::to_string(opt.max_iterations) + " iterations (last factor " +
                              std::to_string(q) + ")");

    AncientOrbit orbit;
    orbit.depth = depth;
    orbit.points = std::move(x);
    orbit.contraction = q;
    orbit.weighted_norm = detail::weighted_seq_norm(orbit.points, p.a);
    double res = 0.0;
    for (int i = -depth + 1; i <= 0; ++i)
        res = std::max(res, (orbit.x(i) - p.f(orbit.x(i - 1))).norm());
    orbit.residual = res;
    return orbit;
}

struct GraphSample {
    Eigen::VectorXd v;
    Eigen::VectorXd x0;
    double tangency_defect = 0.0;  // ||pi^s(x0)|| / ||v||
    double residual = 0.0;
    double contraction = 0.0;
};

// Samples of the local unstable manifold as a graph over E^u; the tangency
// defect must vanish as v -> 0 (tangency to the unstable factor).
inline std::vector<GraphSample> unstable_graph(const HyperbolicMapProblem& p,
                                               const std::vector<Eigen::VectorXd>& samples, int depth,
                                               const SolveOptions& opt = {})
{
    std::vector<GraphSample> out;
    out.reserve(samples.size());
    for (const Eigen::VectorXd& v : samples) {
        const AncientOrbit orbit = solve_ancient_orbit(p, v, depth, opt);
        GraphSample s;
        s.v = v;
        s.x0 = orbit.x(0);
        s.tangency_defect = v.norm() > 0 ? s.x0.head(p.dim_s).norm() / v.norm() : 0.0;
        s.residual = orbit.residual;
        s.contraction = orbit.contraction;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// toy gallery
// ---------------------------------------------------------------------------

// f(s, u) = (s/2 + u^2, 2u): unstable manifold is the graph s = (2/7) u^2.
inline HyperbolicMapProblem toy_quadratic_map()
{
    HyperbolicMapProblem p;
    p.dim_s = 1;
    p.dim_u = 1;
    p.T_s = Eigen::MatrixXd::Constant(1, 1, 0.5);
    p.T_u = Eigen::MatrixXd::Constant(1, 1, 2.0);
    p.a = std::sqrt(2.0);
    p.neighborhood_radius = 4.0;
    p.g = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(2);
        r(0) = x(1) * x(1);
        return r;
    };
    return p;
}

// f(s, u) = (s/3 + u^3, 3u): unstable manifold is the graph s = (3/80) u^3.
inline HyperbolicMapProblem toy_cubic_map()
{
    HyperbolicMapProblem p;
    p.dim_s = 1;
    p.dim_u = 1;
    p.T_s = Eigen::MatrixXd::Constant(1, 1, 1.0 / 3.0);
    p.T_u = Eigen::MatrixXd::Constant(1, 1, 3.0);
    p.a = std::sqrt(3.0);
    p.neighborhood_radius = 4.0;
    p.g = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(2);
        r(0) = x(1) * x(1) * x(1);
        return r;
    };
    return p;
}

// purely linear problem (g == 0) with the given diagonal multipliers
inline HyperbolicMapProblem toy_linear_map(const std::vector<double>& stable_multipliers,
                                           const std::vector<double>& unstable_multipliers, double a)
{
    HyperbolicMapProblem p;
    p.dim_s = static_cast<int>(stable_multipliers.size());
    p.dim_u = static_cast<int>(unstable_multipliers.size());
    p.T_s = Eigen::MatrixXd::Zero(p.dim_s, p.dim_s);
    for (int i = 0; i < p.dim_s; ++i) p.T_s(i, i) = stable_multipliers[i];
    p.T_u = Eigen::MatrixXd::Zero(p.dim_u, p.dim_u);
    for (int i = 0; i < p.dim_u; ++i) p.T_u(i, i) = unstable_multipliers[i];
    p.a = a;
    p.neighborhood_radius = 1e6;
    const int d = p.dim();
    p.g = [d](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(d); };
    return p;
}

// ---------------------------------------------------------------------------
// Spectrally truncated time-dt flow map: T = diag(e^(lambda_j dt)) on the
// leading eigenbasis, g = weighted-L2 Galerkin projection of the nonlinear
// time-dt map minus its linear part, computed by differencing the nonlinear
// evolution against the evolved background.
// ---------------------------------------------------------------------------
struct TruncatedFlowMap {
    HyperbolicMapProblem problem;
    std::vector<EigenPair> stable_modes;    // problem ordering: [stable; unstable]
    std::vector<EigenPair> unstable_modes;
    double dt = 1.0;
    std::shared_ptr<const WarpedProfile> profile;

    // metric perturbation for mode coefficients c (problem ordering)
    TensorPerturbation synthesize(const Eigen::VectorXd& c) const
    {
        TensorPerturbation t = TensorPerturbation::zero(profile->size());
        auto add = [&](const EigenPair& m, double w) {
            for (std::size_t i = 0; i < t.size(); ++i) {
                t.eta0[i] += w * m.tensor.eta0[i];
                t.eta1[i] += w * m.tensor.eta1[i];
                t.eta2[i] += w * m.tensor.eta2[i];
            }
        };
        for (int j = 0; j < static_cast<int>(stable_modes.size()); ++j) add(stable_modes[j], c(j));
        for (int j = 0; j < static_cast<int>(unstable_modes.size()); ++j)
            add(unstable_modes[j], c(static_cast<int>(stable_modes.size()) + j));
        return t;
    }
};

inline TruncatedFlowMap truncate_flow_map(std::shared_ptr<const WarpedProfile> profile,
                                          const OperatorCoefficients& coeffs,
                                          const std::vector<EigenPair>& modes, int dim_s, int dim_u,
                                          double dt, const EvolveOptions& evolve_opts = {})
{
    if (dim_u < 1 || dim_s < 0 || dim_s + dim_u > static_cast<int>(modes.size()))
        throw std::invalid_argument("truncate_flow_map: bad subspace dimensions");
    for (int j = dim_u; j < static_cast<int>(modes.size()); ++j)
        if (modes[j].lambda > 0.0)
            throw std::invalid_argument("truncate_flow_map: unstable factor must contain every positive eigenvalue");

    TruncatedFlowMap tf;
    tf.dt = dt;
    tf.profile = profile;
    for (int j = 0; j < dim_u; ++j) tf.unstable_modes.push_back(modes[j]);
    for (int j = dim_u; j < dim_u + dim_s; ++j) tf.stable_modes.push_back(modes[j]);

    const double mult_u_min = std::exp(modes[dim_u - 1].lambda * dt);
    const double mult_s_max = dim_s > 0 ? std::exp(modes[dim_u].lambda * dt) : 0.0;
    if (!(mult_u_min > 1.0) || !(mult_u_min > std::max(mult_s_max, 1.0) * 1.0000001))
        throw std::invalid_argument("truncate_flow_map: no spectral gap between the factors at this dt");
    const double a = std::sqrt(mult_u_min * std::max(mult_s_max, 1.0));

    HyperbolicMapProblem& p = tf.problem;
    p.dim_s = dim_s;
    p.dim_u = dim_u;
    p.T_s = Eigen::MatrixXd::Zero(dim_s, dim_s);
    for (int j = 0; j < dim_s; ++j) p.T_s(j, j) = std::exp(tf.stable_modes[j].lambda * dt);
    p.T_u = Eigen::MatrixXd::Zero(dim_u, dim_u);
    for (int j = 0; j < dim_u; ++j) p.T_u(j, j) = std::exp(tf.unstable_modes[j].lambda * dt);
    p.a = std::max(a, 1.0 + 1e-9);
    p.neighborhood_radius = 1.0;

    // Galerkin remainder: coefficients of [Phi_dt(bg + h(c)) - Phi_dt(bg)] minus T c.
    // Subtracting the evolved background makes g(0) = 0 exactly at the scheme level.
    auto coeffs_copy = std::make_shared<OperatorCoefficients>(coeffs);
    auto stable_copy = std::make_shared<std::vector<EigenPair>>(tf.stable_modes);
    auto unstable_copy = std::make_shared<std::vector<EigenPair>>(tf.unstable_modes);
    auto bg_evolved = std::make_shared<FlowTrajectory>(evolve(background_state(profile), dt, evolve_opts));
    bg_evolved->require_ok();

    p.g = [profile, coeffs_copy, stable_copy, unstable_copy, bg_evolved, dt, evolve_opts, dim_s,
           dim_u](const Eigen::VectorXd& c) -> Eigen::VectorXd {
        const std::size_t n = profile->size();
        TensorPerturbation h = TensorPerturbation::zero(n);
        auto add = [&](const EigenPair& m, double w) {
            if (w == 0.0) return;
            for (std::size_t i = 0; i < n; ++i) {
                h.eta0[i] += w * m.tensor.eta0[i];
                h.eta1[i] += w * m.tensor.eta1[i];
                h.eta2[i] += w * m.tensor.eta2[i];
            }
        };
        for (int j = 0; j < dim_s; ++j) add((*stable_copy)[j], c(j));
        for (int j = 0; j < dim_u; ++j) add((*unstable_copy)[j], c(dim_s + j));

        if (c.cwiseAbs().maxCoeff() == 0.0) return Eigen::VectorXd::Zero(dim_s + dim_u);

        const FlowState seeded = perturb_metric(profile, h, 1.0);
        FlowTrajectory traj = evolve(seeded, dt, evolve_opts);
        traj.require_ok();
        const TensorPerturbation after = state_perturbation(traj.final_state);
        const TensorPerturbation base = state_perturbation(bg_evolved->final_state);
        TensorPerturbation diff = TensorPerturbation::zero(n);
        for (std::size_t i = 0; i < n; ++i) {
            diff.eta0[i] = after.eta0[i] - base.eta0[i];
            diff.eta1[i] = after.eta1[i] - base.eta1[i];
            diff.eta2[i] = after.eta2[i] - base.eta2[i];
        }
        Eigen::VectorXd out(dim_s + dim_u);
        for (int j = 0; j < dim_s; ++j)
            out(j) = weighted_inner_product(diff, (*stable_copy)[j].tensor, *coeffs_copy) -
                     std::exp((*stable_copy)[j].lambda * dt) * c(j);
        for (int j = 0; j < dim_u; ++j)
            out(dim_s + j) = weighted_inner_product(diff, (*unstable_copy)[j].tensor, *coeffs_copy) -
                             std::exp((*unstable_copy)[j].lambda * dt) * c(dim_s + j);
        return out;
    };
    return tf;
}

} // namespace warpflow
