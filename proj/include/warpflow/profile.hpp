#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "warpflow/numerics.hpp"

namespace warpflow {

// Smooth-closure series data at x = 0: v1 odd with v1'(0) = 1, v2 even with
// v2(0) > 0. Coefficients are stored for the full series in x (odd slots of
// v1, even slots of v2 populated).
struct OriginSeries {
    PowerSeries v1;  // x + a3 x^3 + a5 x^5 + ...
    PowerSeries v2;  // c + b2 x^2 + b4 x^4 + ...

    bool empty() const { return v1.size() == 0 && v2.size() == 0; }

    // odd/even coefficient lists as exposed in the JSON sidecar
    std::vector<double> v1_odd() const
    {
        std::vector<double> r;
        for (std::size_t k = 1; k < v1.size(); k += 2) r.push_back(v1[k]);
        return r;
    }
    std::vector<double> v2_even() const
    {
        std::vector<double> r;
        for (std::size_t k = 0; k < v2.size(); k += 2) r.push_back(v2[k]);
        return r;
    }

    static OriginSeries from_parity_lists(const std::vector<double>& odd1,
                                          const std::vector<double>& even2)
    {
        OriginSeries s;
        s.v1 = PowerSeries(2 * odd1.size());
        for (std::size_t i = 0; i < odd1.size(); ++i) s.v1.at(2 * i + 1) = odd1[i];
        s.v2 = PowerSeries(even2.empty() ? std::size_t{1} : 2 * even2.size() - 1);
        for (std::size_t i = 0; i < even2.size(); ++i) s.v2.at(2 * i) = even2[i];
        return s;
    }

    // Radius inside which both truncations are accurate to ~1e-10 relatively.
    double trust_radius() const
    {
        if (empty()) return 0.0;
        return std::min(v1.trust_radius(), v2.trust_radius());
    }
};

// Sampled doubly warped product metric g = v0^2 dx^2 + v1^2 g1hat + v2^2 g2hat
// on a strictly increasing radial grid with x_k > 0. Derivative samples are
// produced by the constructing algorithm (ODE integration or closed form),
// never by differencing the value samples.
struct WarpedProfile {
    int n1 = 2;
    int n2 = 2;
    Field grid;
    Field v0, v1, v2;
    Field v0x, v1x, v2x;
    Field v1xx, v2xx;
    OriginSeries origin;

    // diagnostics recorded by the constructing algorithm
    double max_constraint_residual = 0.0;
    std::vector<std::string> warnings;

    std::size_t size() const { return grid.size(); }

    void validate() const
    {
        const std::size_t n = grid.size();
        if (n < 4) throw std::invalid_argument("WarpedProfile: need at least 4 grid points");
        if (n1 < 2 || n2 < 2) throw std::invalid_argument("WarpedProfile: fiber dimensions must be >= 2");
        for (const Field* f : {&v0, &v1, &v2, &v0x, &v1x, &v2x, &v1xx, &v2xx})
            if (f->size() != n) throw std::invalid_argument("WarpedProfile: field/grid size mismatch");
        if (grid.front() <= 0.0) throw std::invalid_argument("WarpedProfile: grid must satisfy x > 0");
        for (std::size_t i = 0; i + 1 < n; ++i)
            if (grid[i + 1] <= grid[i]) throw std::invalid_argument("WarpedProfile: grid not strictly increasing");
        for (std::size_t i = 0; i < n; ++i)
            if (!(v0[i] > 0.0) || !(v1[i] > 0.0) || !(v2[i] > 0.0))
                throw std::invalid_argument("WarpedProfile: warping functions must be positive at x = " +
                                            std::to_string(grid[i]));
    }

    // Max relative deviation between stored first derivatives and centered
    // differences of the value samples (validation hook; O(dx^2) expected).
    double derivative_consistency() const
    {
        double worst = 0.0;
        for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
            const double dx2 = grid[i + 1] - grid[i - 1];
            auto check = [&](const Field& v, const Field& vx) {
                const double fd = (v[i + 1] - v[i - 1]) / dx2;
                const double scale = std::max({1.0, std::abs(vx[i])});
                worst = std::max(worst, std::abs(fd - vx[i]) / scale);
            };
            check(v1, v1x);
            check(v2, v2x);
            check(v0, v0x);
        }
        return worst;
    }
};

// Symmetric-tensor perturbation sampled on a profile's grid. Components are
// taken with respect to the background blocks {dx^2, v1^2 g1hat, v2^2 g2hat},
// the basis in which the reduced Lichnerowicz operator acts and the weighted
// L^2 product is diag(1, n1, n2).
struct TensorPerturbation {
    Field eta0, eta1, eta2;

    std::size_t size() const { return eta0.size(); }

    static TensorPerturbation zero(std::size_t n)
    {
        TensorPerturbation t;
        t.eta0.assign(n, 0.0);
        t.eta1.assign(n, 0.0);
        t.eta2.assign(n, 0.0);
        return t;
    }

    void validate(const WarpedProfile& p) const
    {
        if (eta0.size() != p.size() || eta1.size() != p.size() || eta2.size() != p.size())
            throw std::invalid_argument("TensorPerturbation: grid size mismatch with profile");
        if (!all_finite(eta0) || !all_finite(eta1) || !all_finite(eta2))
            throw std::invalid_argument("TensorPerturbation: non-finite component");
    }

    const Field& component(int c) const
    {
        switch (c) {
            case 0: return eta0;
            case 1: return eta1;
            default: return eta2;
        }
    }
    Field& component(int c)
    {
        switch (c) {
            case 0: return eta0;
            case 1: return eta1;
            default: return eta2;
        }
    }
};

// Ricci-flat cone slopes c_a = sqrt((n_a - 1)/(n - 1)).
inline double cone_slope(int na, int n) { return std::sqrt((na - 1.0) / (n - 1.0)); }

// Exact cone profile v0 = 1, v_a = c_a x on the given grid. slope1/slope2
// default to the Ricci-flat values; other slopes give a (generally curved)
// cone for testing.
inline WarpedProfile make_cone_profile(int n1, int n2, const Field& grid,
                                       double slope1 = -1.0, double slope2 = -1.0)
{
    const int n = n1 + n2;
    const double c1 = slope1 > 0 ? slope1 : cone_slope(n1, n);
    const double c2 = slope2 > 0 ? slope2 : cone_slope(n2, n);
    WarpedProfile p;
    p.n1 = n1;
    p.n2 = n2;
    p.grid = grid;
    const std::size_t m = grid.size();
    p.v0.assign(m, 1.0);
    p.v0x.assign(m, 0.0);
    p.v1.resize(m);
    p.v2.resize(m);
    p.v1x.assign(m, c1);
    p.v2x.assign(m, c2);
    p.v1xx.assign(m, 0.0);
    p.v2xx.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        p.v1[i] = c1 * grid[i];
        p.v2[i] = c2 * grid[i];
    }
    p.validate();
    return p;
}

// Rescaled profile under (x, v) -> (lam x, lam v); Ricci-flatness is scale
// invariant, derivatives transform accordingly.
inline WarpedProfile rescale_profile(const WarpedProfile& p, double lam)
{
    if (!(lam > 0.0)) throw std::invalid_argument("rescale_profile: lam must be positive");
    WarpedProfile q = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        q.grid[i] = lam * p.grid[i];
        q.v0[i] = p.v0[i];          // v0 = v0(x/lam): value invariant
        q.v1[i] = lam * p.v1[i];
        q.v2[i] = lam * p.v2[i];
        q.v0x[i] = p.v0x[i] / lam;
        q.v1x[i] = p.v1x[i];
        q.v2x[i] = p.v2x[i];
        q.v1xx[i] = p.v1xx[i] / lam;
        q.v2xx[i] = p.v2xx[i] / lam;
    }
    return q;
}

} // namespace warpflow
