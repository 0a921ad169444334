#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "warpflow/profile.hpp"

namespace warpflow {

// Scale-invariant Ricci-flatness tolerance, max_x x^2 |Rc| (see lichnerowicz_v_form).
inline constexpr double kRicciFlatTol = 1e-6;

// Radial-direction Christoffel coefficients of g = v0^2 dx^2 + v1^2 g1hat + v2^2 g2hat
// at one grid point; purely fiber-intrinsic symbols are excluded. s is arclength,
// d/ds = v0^-1 d/dx.
//
//   Gamma^0_00 = v0_s,
//   Gamma^0_ij = -(v1_s v1) g1hat_ij,   Gamma^k_0j = (v1_s/v1) delta^k_j,
//   Gamma^0_ab = -(v2_s v2) g2hat_ab,   Gamma^c_0b = (v2_s/v2) delta^c_b.
struct ChristoffelTable {
    double gamma0_00 = 0.0;
    double gamma0_11 = 0.0;  // coefficient of g1hat_ij
    double gamma1_01 = 0.0;  // coefficient of delta^k_j
    double gamma0_22 = 0.0;  // coefficient of g2hat_ab
    double gamma2_02 = 0.0;  // coefficient of delta^c_b
};

namespace detail {

// pointwise geometric data, with a series-evaluated path near the origin where
// the sampled formulas would suffer 0/0-style cancellation
struct PointGeometry {
    double v0, v0x;
    double v1, v1x, v1xx;
    double v2, v2x, v2xx;
    double q1;  // (n1-1)(1 - v1x^2)/v1^2, cancellation-safe near 0
    double q2;  // (n2-1)(1 - v2x^2)/v2^2
};

// crossover radius below which the origin series is used for evaluation
inline double series_crossover(const WarpedProfile& p)
{
    if (p.origin.empty() || p.size() < 2) return 0.0;
    const double dx1 = p.grid[1] - p.grid[0];
    return std::min(10.0 * dx1, p.origin.trust_radius());
}

inline PowerSeries strip(const PowerSeries& s, std::size_t m)
{
    PowerSeries r(s.size() > m ? s.size() - m : std::size_t{1});
    for (std::size_t k = 0; k < r.size(); ++k) r.at(k) = s[k + m];
    return r;
}

inline PointGeometry point_geometry(const WarpedProfile& p, std::size_t k)
{
    if (k >= p.size()) throw std::out_of_range("point_geometry: grid index out of range");
    PointGeometry g{};
    const double x = p.grid[k];
    if (x < series_crossover(p)) {
        const PowerSeries& s1 = p.origin.v1;
        const PowerSeries& s2 = p.origin.v2;
        g.v0 = 1.0;
        g.v0x = 0.0;
        g.v1 = s1.eval(x);
        g.v1x = s1.derivative().eval(x);
        g.v1xx = s1.derivative().derivative().eval(x);
        g.v2 = s2.eval(x);
        g.v2x = s2.derivative().eval(x);
        g.v2xx = s2.derivative().derivative().eval(x);
        // 1 - v1x^2 by coefficient arithmetic: the constant term cancels exactly
        PowerSeries one(std::size_t{1});
        one.at(0) = 1.0;
        PowerSeries p1 = one - s1.derivative() * s1.derivative();  // starts at x^2
        PowerSeries d1 = s1 * s1;                                  // starts at x^2
        g.q1 = (p.n1 - 1) * strip(p1, 2).eval(x) / strip(d1, 2).eval(x);
        PowerSeries p2 = one - s2.derivative() * s2.derivative();
        g.q2 = (p.n2 - 1) * p2.eval(x) / (g.v2 * g.v2);
    } else {
        g.v0 = p.v0[k];
        g.v0x = p.v0x[k];
        g.v1 = p.v1[k];
        g.v1x = p.v1x[k];
        g.v1xx = p.v1xx[k];
        g.v2 = p.v2[k];
        g.v2x = p.v2x[k];
        g.v2xx = p.v2xx[k];
        g.q1 = (p.n1 - 1) * (1.0 - g.v1x * g.v1x) / (g.v1 * g.v1);
        g.q2 = (p.n2 - 1) * (1.0 - g.v2x * g.v2x) / (g.v2 * g.v2);
    }
    return g;
}

} // namespace detail

inline ChristoffelTable christoffel(const WarpedProfile& p, std::size_t k)
{
    const auto g = detail::point_geometry(p, k);
    ChristoffelTable t;
    const double v1s = g.v1x / g.v0;
    const double v2s = g.v2x / g.v0;
    t.gamma0_00 = g.v0x / g.v0;
    t.gamma0_11 = -v1s * g.v1;
    t.gamma1_01 = v1s / g.v1;
    t.gamma0_22 = -v2s * g.v2;
    t.gamma2_02 = v2s / g.v2;
    return t;
}

// The three scalar braces of the Ricci tensor in the {ds^2, g1-block, g2-block}
// decomposition; all vanish iff the metric is Ricci-flat at the point.
struct RicciComponents {
    double r00 = 0.0;
    double rc1 = 0.0;
    double rc2 = 0.0;
    double max_abs() const { return std::max({std::abs(r00), std::abs(rc1), std::abs(rc2)}); }
};

inline RicciComponents ricci_components(const WarpedProfile& p, std::size_t k)
{
    const auto g = detail::point_geometry(p, k);
    const double v1s = g.v1x / g.v0;
    const double v2s = g.v2x / g.v0;
    // (v_a)_ss = v_axx / v0^2 - v_ax v0x / v0^3
    const double v1ss = g.v1xx / (g.v0 * g.v0) - g.v1x * g.v0x / (g.v0 * g.v0 * g.v0);
    const double v2ss = g.v2xx / (g.v0 * g.v0) - g.v2x * g.v0x / (g.v0 * g.v0 * g.v0);
    // q_a is (n_a-1)(1-(v_a)_x^2)/v_a^2; correct to s-derivatives for general v0
    const double q1s = g.q1 - (p.n1 - 1) * (v1s * v1s - g.v1x * g.v1x) / (g.v1 * g.v1);
    const double q2s = g.q2 - (p.n2 - 1) * (v2s * v2s - g.v2x * g.v2x) / (g.v2 * g.v2);
    const double mix = v1s * v2s / (g.v1 * g.v2);
    RicciComponents r;
    r.r00 = -(p.n1 * v1ss / g.v1 + p.n2 * v2ss / g.v2);
    r.rc1 = -v1ss / g.v1 + q1s - p.n2 * mix;
    r.rc2 = -v2ss / g.v2 + q2s - p.n1 * mix;
    return r;
}

inline double scalar_curvature(const WarpedProfile& p, std::size_t k)
{
    const auto r = ricci_components(p, k);
    return r.r00 + p.n1 * r.rc1 + p.n2 * r.rc2;
}

// max_k x_k^2 |Rc(x_k)|, the scale-invariant Ricci-flatness defect
inline double ricci_flat_defect(const WarpedProfile& p)
{
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double x2 = p.grid[k] * p.grid[k];
        worst = std::max(worst, x2 * ricci_components(p, k).max_abs());
    }
    return worst;
}

// Lichnerowicz Laplacian in v-coefficient form, Delta h + 2 Rm*h, for a
// Ricci-flat background with v0 == 1 (the Rc*h terms drop). eta derivatives
// use centered second-order differences; the two end cells use one-sided
// stencils of the same order.
//
// Cross-validation partner of the w-form operator assembled in operator.hpp:
// the two coefficient routes are algebraically equal, the discretizations
// differ at O(dx^2).
inline TensorPerturbation lichnerowicz_v_form(const WarpedProfile& p, const TensorPerturbation& h)
{
    h.validate(p);
    if (!is_uniform(p.grid))
        throw std::invalid_argument("lichnerowicz_v_form: uniform grid required");
    for (double v : p.v0)
        if (std::abs(v - 1.0) > 1e-12)
            throw std::invalid_argument("lichnerowicz_v_form: background must have v0 == 1");
    const double defect = ricci_flat_defect(p);
    if (defect > kRicciFlatTol)
        throw std::invalid_argument("lichnerowicz_v_form: profile is not Ricci-flat to tolerance (defect " +
                                    std::to_string(defect) + ")");

    const std::size_t n = p.size();
    const double dx = grid_spacing(p.grid);
    auto dx1 = [&](const Field& f, std::size_t i) {
        if (i == 0) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
        if (i == n - 1) return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
        return (f[i + 1] - f[i - 1]) / (2.0 * dx);
    };
    auto dx2 = [&](const Field& f, std::size_t i) {
        if (i == 0) return (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (dx * dx);
        if (i == n - 1) return (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / (dx * dx);
        return (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (dx * dx);
    };

    TensorPerturbation out = TensorPerturbation::zero(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = detail::point_geometry(p, i);
        const double l1 = g.v1x / g.v1;
        const double l2 = g.v2x / g.v2;
        const double A = p.n1 * l1 + p.n2 * l2;
        const double mix = l1 * l2;
        const double k1 = g.v1xx / g.v1;
        const double k2 = g.v2xx / g.v2;

        const double e0 = h.eta0[i], e1 = h.eta1[i], e2 = h.eta2[i];
        const double rm0 = -p.n1 * k1 * e1 - p.n2 * k2 * e2;
        const double rm1 = -k1 * e0 + g.q1 * e1 - p.n2 * mix * e2;
        const double rm2 = -k2 * e0 - p.n1 * mix * e1 + g.q2 * e2;

        const double d0 = dx2(h.eta0, i) + p.n1 * l1 * (dx1(h.eta0, i) + 2.0 * l1 * (e1 - e0)) +
                          p.n2 * l2 * (dx1(h.eta0, i) + 2.0 * l2 * (e2 - e0));
        const double d1 = dx2(h.eta1, i) + A * dx1(h.eta1, i) + 2.0 * l1 * l1 * (e0 - e1);
        const double d2 = dx2(h.eta2, i) + A * dx1(h.eta2, i) + 2.0 * l2 * l2 * (e0 - e2);

        out.eta0[i] = d0 + 2.0 * rm0;
        out.eta1[i] = d1 + 2.0 * rm1;
        out.eta2[i] = d2 + 2.0 * rm2;
    }
    return out;
}

} // namespace warpflow
