#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "warpflow/geometry.hpp"
#include "warpflow/numerics.hpp"
#include "warpflow/profile.hpp"

namespace warpflow {

// Integration reached a point where a warping function or derivative left the
// admissible range before the requested outer radius.
class profile_collapse_error : public numerical_error {
public:
    profile_collapse_error(const std::string& what, double radius)
        : numerical_error(what), radius_(radius) {}
    double radius() const { return radius_; }

private:
    double radius_ = 0.0;
};

struct BohmOptions {
    int n1 = 2;
    int n2 = 2;
    double c = 1.0;         // v2(0)
    double x_start = 1e-3;  // series -> ODE handoff radius
    double L = 200.0;       // outer radius
    double rk_tol = 1e-10;  // local error tolerance
    int series_order = 8;   // highest power retained in the origin series
    std::size_t grid_points = 2048;

    // returns warnings (empty if none); throws on hard violations
    std::vector<std::string> validate() const
    {
        if (n1 < 2 || n2 < 2) throw std::invalid_argument("BohmOptions: n1 and n2 must be >= 2");
        if (!(c > 0.0)) throw std::invalid_argument("BohmOptions: c must be positive");
        if (!(x_start > 0.0) || x_start > 0.1)
            throw std::invalid_argument("BohmOptions: need 0 < x_start <= 0.1");
        if (!(L >= 1.0) || L <= x_start) throw std::invalid_argument("BohmOptions: need L >= 1 and L > x_start");
        if (!(rk_tol > 0.0)) throw std::invalid_argument("BohmOptions: rk_tol must be positive");
        if (series_order < 4) throw std::invalid_argument("BohmOptions: series_order must be >= 4");
        if (grid_points < 16) throw std::invalid_argument("BohmOptions: grid_points must be >= 16");
        std::vector<std::string> w;
        const int n = n1 + n2;
        if (n < 4 || n > 8)
            w.push_back("n1+n2 = " + std::to_string(n) +
                        " outside [4, 8]: smooth-closure convergence to the cone is not established; "
                        "integration may collapse or oscillate");
        return w;
    }
};

// State of the fiber system y = (v1, v1', v2, v2').
using FiberState = std::array<double, 4>;

// v_a'' from the two fiber equations (v0 == 1):
//   v_a'' = v_a [ (n_a-1)(1-v_a'^2)/v_a^2 - n_b v_a' v_b'/(v_a v_b) ]
inline FiberState fiber_rhs(int n1, int n2, const FiberState& y)
{
    const double v1 = y[0], p1 = y[1], v2 = y[2], p2 = y[3];
    const double mix = p1 * p2 / (v1 * v2);
    const double f1 = v1 * ((n1 - 1) * (1.0 - p1 * p1) / (v1 * v1) - n2 * mix);
    const double f2 = v2 * ((n2 - 1) * (1.0 - p2 * p2) / (v2 * v2) - n1 * mix);
    return {p1, f1, p2, f2};
}

// x^2 |sum_a n_a v_a''/v_a| with v'' from the fiber equations; the conserved
// 00-constraint monitor (zero on exact solutions).
inline double constraint_value(int n1, int n2, double x, const FiberState& y)
{
    const FiberState f = fiber_rhs(n1, n2, y);
    return x * x * std::abs(n1 * f[1] / y[0] + n2 * f[3] / y[2]);
}

// ---------------------------------------------------------------------------
// Origin series: v1 = x + a3 x^3 + ..., v2 = c + b2 x^2 + ... solving both
// fiber equations order by order. The recursion is solved numerically: each
// residual coefficient is affine in the newest unknown, so two probes fix it.
// ---------------------------------------------------------------------------
namespace detail {

struct SeriesResiduals {
    PowerSeries e1;  // even, starts at x^2
    PowerSeries e2;  // even, starts at x^0
};

inline SeriesResiduals series_residuals(int n1, int n2, const PowerSeries& v1, const PowerSeries& v2,
                                        std::size_t len)
{
    const PowerSeries v1t = v1.truncated(len), v2t = v2.truncated(len);
    const PowerSeries d1 = v1t.derivative().truncated(len);
    const PowerSeries d2 = v2t.derivative().truncated(len);
    const PowerSeries dd1 = d1.derivative().truncated(len);
    const PowerSeries dd2 = d2.derivative().truncated(len);
    PowerSeries one(len);
    one.at(0) = 1.0;
    SeriesResiduals r;
    r.e1 = dd1 * v1t - static_cast<double>(n1 - 1) * (one - d1 * d1) +
           static_cast<double>(n2) * (d1 * d2 * v1t) / v2t;
    // v2/v1 handled by stripping the leading x of v1 (and of the odd numerator)
    const PowerSeries num = d1 * d2 * v2t;  // odd, starts at x
    r.e2 = dd2 * v2t - static_cast<double>(n2 - 1) * (one - d2 * d2) +
           static_cast<double>(n1) * strip(num, 1) / strip(v1t, 1);
    return r;
}

} // namespace detail

// Coefficients of the smooth-closure series through x^series_order, making
// both fiber Ricci components vanish to O(x^(series_order - 1)).
inline OriginSeries solve_origin_series(int n1, int n2, double c, int order)
{
    const std::size_t len = static_cast<std::size_t>(order) + 3;
    OriginSeries s;
    s.v1 = PowerSeries(len);
    s.v1.at(1) = 1.0;
    s.v2 = PowerSeries(len);
    s.v2.at(0) = c;

    // unknown schedule: b2 (from E2@x^0), a3 (E1@x^2), b4 (E2@x^2), a5 (E1@x^4), ...
    struct Slot {
        bool is_b;
        std::size_t coeff_index;
        std::size_t match_order;
    };
    std::vector<Slot> slots;
    for (std::size_t m = 0;; ++m) {
        const std::size_t b_idx = 2 * m + 2;
        if (b_idx <= static_cast<std::size_t>(order)) slots.push_back({true, b_idx, 2 * m});
        const std::size_t a_idx = 2 * m + 3;
        if (a_idx <= static_cast<std::size_t>(order)) slots.push_back({false, a_idx, 2 * m + 2});
        if (b_idx > static_cast<std::size_t>(order) && a_idx > static_cast<std::size_t>(order)) break;
    }

    for (const Slot& slot : slots) {
        auto residual_coeff = [&](double u) {
            PowerSeries v1t = s.v1, v2t = s.v2;
            (slot.is_b ? v2t : v1t).at(slot.coeff_index) = u;
            const auto r = detail::series_residuals(n1, n2, v1t, v2t, len);
            return slot.is_b ? r.e2[slot.match_order] : r.e1[slot.match_order];
        };
        const double r0 = residual_coeff(0.0);
        const double r1 = residual_coeff(1.0);
        const double m = r1 - r0;
        if (std::abs(m) < 1e-14)
            throw numerical_error("solve_origin_series: degenerate recursion pivot");
        (slot.is_b ? s.v2 : s.v1).at(slot.coeff_index) = -r0 / m;
    }
    s.v1 = s.v1.truncated(static_cast<std::size_t>(order) + 1);
    s.v2 = s.v2.truncated(static_cast<std::size_t>(order) + 1);
    return s;
}

struct SeriesStart {
    FiberState state;    // (v1, v1', v2, v2') at x_start
    OriginSeries series;
};

inline SeriesStart series_start(const BohmOptions& opts)
{
    opts.validate();
    SeriesStart r;
    r.series = solve_origin_series(opts.n1, opts.n2, opts.c, opts.series_order);
    const double x = opts.x_start;
    r.state = {r.series.v1.eval(x), r.series.v1.derivative().eval(x),
               r.series.v2.eval(x), r.series.v2.derivative().eval(x)};
    return r;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with FSAL. Steps are capped at the next requested output
// abscissa, so every output is a genuine step endpoint (no interpolation).
// ---------------------------------------------------------------------------
namespace detail {

struct DormandPrince {
    int n1, n2;
    double rtol;

    FiberState f(const FiberState& y) const { return fiber_rhs(n1, n2, y); }

    static FiberState axpy(const FiberState& y, double h, std::initializer_list<std::pair<double, const FiberState*>> terms)
    {
        FiberState r = y;
        for (const auto& [c, k] : terms)
            for (int i = 0; i < 4; ++i) r[i] += h * c * (*k)[i];
        return r;
    }

    // one attempted step; returns error measure, fills y_new and k7
    double step(const FiberState& y, const FiberState& k1, double h, FiberState& y_new, FiberState& k7) const
    {
        const FiberState k2 = f(axpy(y, h, {{1.0 / 5, &k1}}));
        const FiberState k3 = f(axpy(y, h, {{3.0 / 40, &k1}, {9.0 / 40, &k2}}));
        const FiberState k4 = f(axpy(y, h, {{44.0 / 45, &k1}, {-56.0 / 15, &k2}, {32.0 / 9, &k3}}));
        const FiberState k5 = f(axpy(y, h, {{19372.0 / 6561, &k1}, {-25360.0 / 2187, &k2},
                                            {64448.0 / 6561, &k3}, {-212.0 / 729, &k4}}));
        const FiberState k6 = f(axpy(y, h, {{9017.0 / 3168, &k1}, {-355.0 / 33, &k2},
                                            {46732.0 / 5247, &k3}, {49.0 / 176, &k4},
                                            {-5103.0 / 18656, &k5}}));
        y_new = axpy(y, h, {{35.0 / 384, &k1}, {500.0 / 1113, &k3}, {125.0 / 192, &k4},
                            {-2187.0 / 6784, &k5}, {11.0 / 84, &k6}});
        k7 = f(y_new);
        // embedded 4th-order difference
        const std::array<double, 7> e = {35.0 / 384 - 5179.0 / 57600, 0.0,
                                         500.0 / 1113 - 7571.0 / 16695, 125.0 / 192 - 393.0 / 640,
                                         -2187.0 / 6784 + 92097.0 / 339200, 11.0 / 84 - 187.0 / 2100,
                                         -1.0 / 40};
        double err = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double de = h * (e[0] * k1[i] + e[2] * k3[i] + e[3] * k4[i] + e[4] * k5[i] +
                                   e[5] * k6[i] + e[6] * k7[i]);
            const double sc = rtol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
            err += (de / sc) * (de / sc);
        }
        return std::sqrt(err / 4.0);
    }
};

} // namespace detail

// Integrate the fiber system from (x0, y0) to L, sampling at the given output
// abscissae (strictly increasing, all in (x0, L]). Returns per-output states
// and records the constraint maximum.
struct FiberIntegration {
    std::vector<FiberState> samples;
    double max_constraint = 0.0;
};

inline FiberIntegration integrate_fiber_system(int n1, int n2, double x0, FiberState y,
                                               const Field& outputs, double rk_tol)
{
    detail::DormandPrince rk{n1, n2, rk_tol};
    FiberIntegration out;
    out.samples.reserve(outputs.size());

    double x = x0;
    double h = std::min(1e-2, rk_tol > 0 ? std::pow(rk_tol, 0.2) : 1e-2);
    FiberState k1 = rk.f(y);
    std::size_t next = 0;
    out.max_constraint = constraint_value(n1, n2, x, y);

    auto check_alive = [&](const FiberState& s, double at) {
        if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !std::isfinite(s[2]) || !std::isfinite(s[3]) ||
            s[0] <= 0.0 || s[2] <= 0.0 || std::abs(s[1]) > 1e8 || std::abs(s[3]) > 1e8)
            throw profile_collapse_error(
                "profile collapse: warping function left the admissible range at x = " + std::to_string(at), at);
    };

    while (next < outputs.size()) {
        const double target = outputs[next];
        if (x >= target) {  // output exactly at current point
            out.samples.push_back(y);
            ++next;
            continue;
        }
        const bool capped = (target - x) < h;
        double h_try = std::min(h, target - x);
        FiberState y_new, k7;
        double err = rk.step(y, k1, h_try, y_new, k7);
        int rejects = 0;
        while (err > 1.0) {
            if (++rejects > 60) throw numerical_error("integrate_fiber_system: step control failed at x = " + std::to_string(x));
            h_try *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            err = rk.step(y, k1, h_try, y_new, k7);
        }
        x += h_try;
        y = y_new;
        k1 = k7;  // FSAL
        check_alive(y, x);
        out.max_constraint = std::max(out.max_constraint, constraint_value(n1, n2, x, y));
        const double grow = (err > 1e-12) ? 0.9 * std::pow(err, -0.2) : 5.0;
        const double proposed = h_try * std::min(5.0, std::max(0.2, grow));
        // an output-capped accepted step must not shrink the natural step size
        h = (capped && rejects == 0) ? std::max(h, proposed) : proposed;
        if (std::abs(x - target) < 1e-12 * std::max(1.0, target)) {
            out.samples.push_back(y);
            ++next;
        }
    }
    return out;
}

// Construct a Ricci-flat Bohm profile on (0, L]: origin series start, adaptive
// integration of the fiber equations with the 00-constraint as a monitor,
// sampled on the uniform staggered grid.
inline WarpedProfile integrate_bohm(const BohmOptions& opts)
{
    auto warnings = opts.validate();
    const SeriesStart start = series_start(opts);

    WarpedProfile p;
    p.n1 = opts.n1;
    p.n2 = opts.n2;
    p.origin = start.series;
    p.grid = staggered_grid(opts.L, opts.grid_points);
    p.warnings = std::move(warnings);

    const std::size_t n = p.grid.size();
    p.v0.assign(n, 1.0);
    p.v0x.assign(n, 0.0);
    p.v1.resize(n);
    p.v1x.resize(n);
    p.v1xx.resize(n);
    p.v2.resize(n);
    p.v2x.resize(n);
    p.v2xx.resize(n);

    // points inside the series region are evaluated from the series
    Field ode_outputs;
    std::size_t first_ode = 0;
    while (first_ode < n && p.grid[first_ode] <= opts.x_start) ++first_ode;
    for (std::size_t k = first_ode; k < n; ++k) ode_outputs.push_back(p.grid[k]);

    for (std::size_t k = 0; k < first_ode; ++k) {
        const double x = p.grid[k];
        p.v1[k] = start.series.v1.eval(x);
        p.v1x[k] = start.series.v1.derivative().eval(x);
        p.v2[k] = start.series.v2.eval(x);
        p.v2x[k] = start.series.v2.derivative().eval(x);
        const FiberState f = fiber_rhs(opts.n1, opts.n2, {p.v1[k], p.v1x[k], p.v2[k], p.v2x[k]});
        p.v1xx[k] = f[1];
        p.v2xx[k] = f[3];
    }

    const FiberIntegration run =
        integrate_fiber_system(opts.n1, opts.n2, opts.x_start, start.state, ode_outputs, opts.rk_tol);
    for (std::size_t i = 0; i < ode_outputs.size(); ++i) {
        const std::size_t k = first_ode + i;
        const FiberState& y = run.samples[i];
        p.v1[k] = y[0];
        p.v1x[k] = y[1];
        p.v2[k] = y[2];
        p.v2x[k] = y[3];
        const FiberState f = fiber_rhs(opts.n1, opts.n2, y);
        p.v1xx[k] = f[1];
        p.v2xx[k] = f[3];
    }

    p.max_constraint_residual = run.max_constraint;
    double scale = 1.0;
    for (std::size_t k = 0; k < n; ++k) scale = std::max({scale, p.v1[k], p.v2[k]});
    if (run.max_constraint > 10.0 * opts.rk_tol * scale)
        p.warnings.push_back("constraint residual " + std::to_string(run.max_constraint) +
                             " exceeds 10*rk_tol*scale");
    p.validate();
    return p;
}

// x -> x^2 |sum n_a v_a''/v_a| evaluated from the stored samples
inline Field constraint_residual(const WarpedProfile& p)
{
    Field r(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double x = p.grid[k];
        r[k] = x * x * std::abs(p.n1 * p.v1xx[k] / p.v1[k] + p.n2 * p.v2xx[k] / p.v2[k]);
    }
    return r;
}

// Asymptotic-cone diagnostics: least-squares slopes over the last decade of
// the grid, endpoint relative errors against the Ricci-flat cone values, and
// an empirical decay exponent of |v_a/x - c_a|.
struct ConeFit {
    double c1_hat = 0.0;
    double c2_hat = 0.0;
    double rel_err1 = 0.0;
    double rel_err2 = 0.0;
    double rate_estimate = 0.0;
    bool fit_warning = false;
    std::string warning;
};

inline ConeFit cone_fit(const WarpedProfile& p)
{
    const int n = p.n1 + p.n2;
    const double L = p.grid.back();
    const double c1 = cone_slope(p.n1, n);
    const double c2 = cone_slope(p.n2, n);

    std::size_t lo = 0;
    while (lo < p.size() && p.grid[lo] < L / 10.0) ++lo;
    if (p.size() - lo < 8) lo = p.size() > 8 ? p.size() - 8 : 0;

    double sxx = 0, sxv1 = 0, sxv2 = 0;
    for (std::size_t k = lo; k < p.size(); ++k) {
        sxx += p.grid[k] * p.grid[k];
        sxv1 += p.grid[k] * p.v1[k];
        sxv2 += p.grid[k] * p.v2[k];
    }
    ConeFit f;
    f.c1_hat = sxv1 / sxx;
    f.c2_hat = sxv2 / sxx;
    f.rel_err1 = std::abs(p.v1.back() / L - c1) / c1;
    f.rel_err2 = std::abs(p.v2.back() / L - c2) / c2;

    // decay exponent of |v_a/x - c_a| from a log-log fit over the same window
    Field lx, ly;
    double floor = 0.0;
    for (std::size_t k = lo; k < p.size(); ++k)
        floor = std::max(floor, std::max(p.v1[k], p.v2[k]));
    floor *= 1e-14;
    bool monotone = true;
    double prev = -1.0;
    for (std::size_t k = lo; k < p.size(); ++k) {
        const double d1 = std::abs(p.v1[k] / p.grid[k] - c1);
        const double d2 = std::abs(p.v2[k] / p.grid[k] - c2);
        const double d = std::max({d1, d2, floor});
        if (prev > 0.0 && d > 1.05 * prev) monotone = false;
        prev = d;
        lx.push_back(std::log(p.grid[k]));
        ly.push_back(std::log(d));
    }
    if (lx.size() >= 3) {
        const LineFit lf = fit_line(lx, ly);
        f.rate_estimate = -lf.slope;
    }
    if (!monotone) {
        f.fit_warning = true;
        f.warning = "non-monotone tail in |v_a/x - c_a|; rate estimate unreliable";
    }
    return f;
}

} // namespace warpflow
