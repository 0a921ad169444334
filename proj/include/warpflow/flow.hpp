#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "warpflow/numerics.hpp"
#include "warpflow/profile.hpp"
#include "warpflow/spectrum.hpp"

namespace warpflow {

// State of the reduced Ricci-DeTurck flow in the log variables
// w0 = log v0, w_a = log(v_a / sqrt(n_a - 1)), sampled on the background's
// staggered grid. The background profile supplies the DeTurck reference
// connection, so it travels with the state.
struct FlowState {
    double t = 0.0;
    Field w0, w1, w2;
    std::shared_ptr<const WarpedProfile> background;
    std::string provenance;

    std::size_t size() const { return w0.size(); }

    void validate() const
    {
        if (!background) throw std::invalid_argument("FlowState: missing background profile");
        const std::size_t n = background->size();
        if (w0.size() != n || w1.size() != n || w2.size() != n)
            throw std::invalid_argument("FlowState: field/grid size mismatch");
        if (!all_finite(w0) || !all_finite(w1) || !all_finite(w2))
            throw std::invalid_argument("FlowState: non-finite field");
    }
};

// Background state w0 = 0, w_a = log(V_a/sqrt(n_a-1)).
inline FlowState background_state(std::shared_ptr<const WarpedProfile> profile)
{
    FlowState s;
    s.background = std::move(profile);
    const WarpedProfile& p = *s.background;
    const std::size_t n = p.size();
    s.w0.assign(n, 0.0);
    s.w1.resize(n);
    s.w2.resize(n);
    const double r1 = std::sqrt(p.n1 - 1.0), r2 = std::sqrt(p.n2 - 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        s.w1[i] = std::log(p.v1[i] / r1);
        s.w2[i] = std::log(p.v2[i] / r2);
    }
    s.provenance = "background";
    return s;
}

// Perturbed initial data: v0^2 = 1 + eps eta0, v_a^2 = V_a^2 (1 + eps eta_a),
// i.e. the metric perturbation with components eta in the background-block
// basis (the basis of the spectral module). Positivity of the perturbed
// metric is required pointwise.
inline FlowState perturb_metric(std::shared_ptr<const WarpedProfile> profile, const TensorPerturbation& h,
                                double eps)
{
    const WarpedProfile& p = *profile;
    h.validate(p);
    FlowState s = background_state(std::move(profile));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double f0 = 1.0 + eps * h.eta0[i];
        const double f1 = 1.0 + eps * h.eta1[i];
        const double f2 = 1.0 + eps * h.eta2[i];
        if (!(f0 > 0.0) || !(f1 > 0.0) || !(f2 > 0.0))
            throw std::invalid_argument("perturb_metric: perturbed metric not positive at x = " +
                                        std::to_string(p.grid[i]));
        s.w0[i] = 0.5 * std::log(f0);
        s.w1[i] += 0.5 * std::log(f1);
        s.w2[i] += 0.5 * std::log(f2);
    }
    s.provenance = "perturbed eps=" + std::to_string(eps);
    return s;
}

// Metric-perturbation components of a state relative to its background:
// eta0 = v0^2 - 1, eta_a = v_a^2/V_a^2 - 1.
inline TensorPerturbation state_perturbation(const FlowState& s)
{
    const WarpedProfile& p = *s.background;
    TensorPerturbation t = TensorPerturbation::zero(p.size());
    const double r1 = std::sqrt(p.n1 - 1.0), r2 = std::sqrt(p.n2 - 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        t.eta0[i] = std::expm1(2.0 * s.w0[i]);
        const double v1 = r1 * std::exp(s.w1[i]);
        const double v2 = r2 * std::exp(s.w2[i]);
        t.eta1[i] = (v1 * v1) / (p.v1[i] * p.v1[i]) - 1.0;
        t.eta2[i] = (v2 * v2) / (p.v2[i] * p.v2[i]) - 1.0;
    }
    return t;
}

// Weighted L2 norm of the metric perturbation of s (weight V1^n1 V2^n2,
// component weights diag(1, n1, n2)).
inline double perturbation_norm(const FlowState& s)
{
    const WarpedProfile& p = *s.background;
    const TensorPerturbation t = state_perturbation(s);
    const double dx = grid_spacing(p.grid);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double mu = std::pow(p.v1[i], p.n1) * std::pow(p.v2[i], p.n2);
        acc += mu * (t.eta0[i] * t.eta0[i] + p.n1 * t.eta1[i] * t.eta1[i] + p.n2 * t.eta2[i] * t.eta2[i]);
    }
    return std::sqrt(acc * dx);
}

// Same weighted norm applied to the difference of two states on a common background.
inline double state_distance(const FlowState& a, const FlowState& b)
{
    const WarpedProfile& p = *a.background;
    if (b.size() != a.size()) throw std::invalid_argument("state_distance: size mismatch");
    const double dx = grid_spacing(p.grid);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double mu = std::pow(p.v1[i], p.n1) * std::pow(p.v2[i], p.n2);
        const double e0 = std::exp(2.0 * a.w0[i]) - std::exp(2.0 * b.w0[i]);
        const double e1 = std::exp(2.0 * a.w1[i]) - std::exp(2.0 * b.w1[i]);
        const double e2 = std::exp(2.0 * a.w2[i]) - std::exp(2.0 * b.w2[i]);
        const double g1 = (p.n1 - 1.0) * e1 / (p.v1[i] * p.v1[i]);
        const double g2 = (p.n2 - 1.0) * e2 / (p.v2[i] * p.v2[i]);
        acc += mu * (e0 * e0 + p.n1 * g1 * g1 + p.n2 * g2 * g2);
    }
    return std::sqrt(acc * dx);
}

namespace detail {

// Extended (two-ghost) v-level arrays: parity mirrors across the origin face
// (v1 odd, v0 and v2 even), background-frozen quadratic extrapolation beyond L.
struct ExtendedFields {
    Field v0, v1, v2;  // length n + 4, cell i at index i + 2
    double dx = 0.0;
    std::size_t n = 0;
};

inline ExtendedFields extend_fields(const FlowState& s)
{
    const WarpedProfile& p = *s.background;
    const std::size_t n = p.size();
    ExtendedFields e;
    e.n = n;
    e.dx = grid_spacing(p.grid);
    e.v0.assign(n + 4, 0.0);
    e.v1.assign(n + 4, 0.0);
    e.v2.assign(n + 4, 0.0);
    const double r1 = std::sqrt(p.n1 - 1.0), r2 = std::sqrt(p.n2 - 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        e.v0[i + 2] = std::exp(s.w0[i]);
        e.v1[i + 2] = r1 * std::exp(s.w1[i]);
        e.v2[i + 2] = r2 * std::exp(s.w2[i]);
    }
    // origin face: v1 odd, v0/v2 even
    for (int g = 0; g < 2; ++g) {
        e.v0[1 - g] = e.v0[2 + g];
        e.v2[1 - g] = e.v2[2 + g];
        e.v1[1 - g] = -e.v1[2 + g];
    }
    // outer: freeze at the background, quadratic extrapolation of V_a; v0 = 1
    auto extrap = [&](const Field& V, double k) {
        const double y1 = V[n - 3], y2 = V[n - 2], y3 = V[n - 1];
        // quadratic through the last three cells, evaluated k cells beyond the last
        return y3 + k * (y3 - y2) + 0.5 * k * (k + 1.0) * ((y3 - y2) - (y2 - y1));
    };
    for (int g = 0; g < 2; ++g) {
        e.v0[n + 2 + g] = 1.0;
        e.v1[n + 2 + g] = extrap(p.v1, g + 1.0);
        e.v2[n + 2 + g] = extrap(p.v2, g + 1.0);
    }
    return e;
}

inline double d1_4th(const Field& f, std::size_t c, double dx)
{
    return (-f[c + 2] + 8.0 * f[c + 1] - 8.0 * f[c - 1] + f[c - 2]) / (12.0 * dx);
}

inline double d2_4th(const Field& f, std::size_t c, double dx)
{
    return (-f[c + 2] + 16.0 * f[c + 1] - 30.0 * f[c] + 16.0 * f[c - 1] - f[c - 2]) / (12.0 * dx * dx);
}

} // namespace detail

struct FlowRhs {
    Field w0dot, w1dot, w2dot;
};

// Reduced Ricci-DeTurck right-hand side (d/ds = v0^-1 d/dx):
//   w0_t = F_s + sum n_a w_{a,s}^2,
//   w_a_t = w_{a,ss} + F w_{a,s} - e^{-2 w_a},
// with F = f + sum n_a w_{a,s} = w0_s + v0 G and G = sum n_a V_a V_a_x / v_a^2
// (the background part of the DeTurck field; G uses the stored profile
// derivatives, so the background is stationary to the stencil error).
inline FlowRhs flow_rhs(const FlowState& s)
{
    s.validate();
    const WarpedProfile& p = *s.background;
    const std::size_t n = p.size();
    const auto e = detail::extend_fields(s);
    const double dx = e.dx;

    FlowRhs r;
    r.w0dot.resize(n);
    r.w1dot.resize(n);
    r.w2dot.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i + 2;
        const double v0 = e.v0[c], v1 = e.v1[c], v2 = e.v2[c];
        const double v0x = detail::d1_4th(e.v0, c, dx);
        const double v1x = detail::d1_4th(e.v1, c, dx);
        const double v2x = detail::d1_4th(e.v2, c, dx);
        const double v0xx = detail::d2_4th(e.v0, c, dx);
        const double v1xx = detail::d2_4th(e.v1, c, dx);
        const double v2xx = detail::d2_4th(e.v2, c, dx);

        const double w0x = v0x / v0;
        const double w1x = v1x / v1;
        const double w2x = v2x / v2;
        const double w0xx = v0xx / v0 - w0x * w0x;
        const double w1xx = v1xx / v1 - w1x * w1x;
        const double w2xx = v2xx / v2 - w2x * w2x;

        const double iv0 = 1.0 / v0;
        const double iv02 = iv0 * iv0;

        // background part of the DeTurck field and its analytic x-derivative
        const double B1 = p.v1[i] * p.v1x[i] / (v1 * v1);
        const double B2 = p.v2[i] * p.v2x[i] / (v2 * v2);
        const double G = p.n1 * B1 + p.n2 * B2;
        const double dB1 = (p.v1x[i] * p.v1x[i] + p.v1[i] * p.v1xx[i]) / (v1 * v1) -
                           2.0 * p.v1[i] * p.v1x[i] * v1x / (v1 * v1 * v1);
        const double dB2 = (p.v2x[i] * p.v2x[i] + p.v2[i] * p.v2xx[i]) / (v2 * v2) -
                           2.0 * p.v2[i] * p.v2x[i] * v2x / (v2 * v2 * v2);
        const double dG = p.n1 * dB1 + p.n2 * dB2;

        const double F = w0x * iv0 + v0 * G;

        r.w0dot[i] = iv02 * (w0xx - w0x * w0x + p.n1 * w1x * w1x + p.n2 * w2x * w2x) + w0x * G + dG;
        r.w1dot[i] = iv02 * (w1xx - w0x * w1x) + F * iv0 * w1x - (p.n1 - 1.0) / (v1 * v1);
        r.w2dot[i] = iv02 * (w2xx - w0x * w2x) + F * iv0 * w2x - (p.n2 - 1.0) / (v2 * v2);
    }
    return r;
}

struct EvolveOptions {
    double cfl = 0.2;              // Delta t = cfl * min(v0^2) dx^2, stability capped
    double stability_margin = 2.2; // explicit RK4 bound applied to the local rates
    int snapshots = 50;
    bool record_states = false;
    double zero_band = -1.0;       // dead band for the zero counter; < 0 = automatic
};

// number of definite sign changes of w1 - w2, with a dead band around zero:
// a crossing counts only when the value exits the band on both sides
inline int sturm_zero_count(const FlowState& s, double tol_band = -1.0)
{
    const std::size_t n = s.size();
    Field d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = s.w1[i] - s.w2[i];
    if (tol_band < 0.0) {
        // 10x a second-difference truncation estimate
        double dd = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i)
            dd = std::max(dd, std::abs(d[i + 1] - 2.0 * d[i] + d[i - 1]));
        tol_band = 10.0 * dd / 12.0 + 1e-13 * max_abs(d);
    }
    int count = 0;
    int last_sign = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(d[i]) <= tol_band) continue;
        const int sign = d[i] > 0.0 ? 1 : -1;
        if (last_sign != 0 && sign != last_sign) ++count;
        last_sign = sign;
    }
    return count;
}

struct FlowTrajectory {
    std::vector<double> times;
    std::vector<int> zero_counts;
    std::vector<double> norms;       // perturbation norm vs the static background
    std::vector<FlowState> states;   // filled when record_states is set (plus final)
    FlowState final_state;
    double dt_used = 0.0;
    std::string status = "ok";       // ok | aborted_nan | aborted_positivity

    void require_ok() const
    {
        if (status != "ok") throw numerical_error("flow trajectory aborted: " + status);
    }
};

namespace detail {

inline double stable_dt(const FlowState& s, const EvolveOptions& opt)
{
    const WarpedProfile& p = *s.background;
    const double dx = grid_spacing(p.grid);
    const auto e = extend_fields(s);
    double lam_max = 0.0;
    double min_v0sq = 1e300;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t c = i + 2;
        const double v0 = e.v0[c], v1 = e.v1[c], v2 = e.v2[c];
        const double iv02 = 1.0 / (v0 * v0);
        min_v0sq = std::min(min_v0sq, v0 * v0);
        const double w0x = d1_4th(e.v0, c, dx) / v0;
        const double B1 = p.v1[i] * p.v1x[i] / (v1 * v1);
        const double B2 = p.v2[i] * p.v2x[i] / (v2 * v2);
        const double F = w0x / v0 + v0 * (p.n1 * B1 + p.n2 * B2);
        const double diff = (16.0 / 3.0) * iv02 / (dx * dx);
        const double adv = 1.4 * (std::abs(F) / v0 + std::abs(w0x) * iv02) / dx;
        const double react = 2.0 * std::max((p.n1 - 1.0) / (v1 * v1), (p.n2 - 1.0) / (v2 * v2));
        lam_max = std::max(lam_max, diff + adv + react);
    }
    const double dt_spec = opt.cfl * min_v0sq * dx * dx;
    const double dt_stab = opt.stability_margin / lam_max;
    return std::min(dt_spec, dt_stab);
}

} // namespace detail

// Method-of-lines evolution with classic RK4; records zero counts and
// perturbation norms at snapshot cadence, aborts with status on NaN or loss
// of metric positivity.
inline FlowTrajectory evolve(const FlowState& initial, double t_final, const EvolveOptions& opt = {})
{
    initial.validate();
    if (!(t_final > initial.t)) throw std::invalid_argument("evolve: t_final must exceed state time");

    FlowTrajectory traj;
    FlowState s = initial;
    const std::size_t n = s.size();
    const double dt = detail::stable_dt(s, opt);
    traj.dt_used = dt;
    const double horizon = t_final - initial.t;
    const long steps = std::max(1L, static_cast<long>(std::ceil(horizon / dt)));
    const long snap_every = std::max(1L, steps / std::max(1, opt.snapshots));

    auto record = [&](const FlowState& st) {
        traj.times.push_back(st.t);
        traj.zero_counts.push_back(sturm_zero_count(st, opt.zero_band));
        traj.norms.push_back(perturbation_norm(st));
        if (opt.record_states) traj.states.push_back(st);
    };
    record(s);

    Field k1w0(n), k1w1(n), k1w2(n);
    FlowState tmp = s;
    auto axpy = [&](const FlowState& base, double a, const FlowRhs& k, FlowState& out) {
        for (std::size_t i = 0; i < n; ++i) {
            out.w0[i] = base.w0[i] + a * k.w0dot[i];
            out.w1[i] = base.w1[i] + a * k.w1dot[i];
            out.w2[i] = base.w2[i] + a * k.w2dot[i];
        }
        out.t = base.t + a;
    };

    FlowState last_good = s;
    for (long step = 0; step < steps; ++step) {
        const double h = std::min(dt, t_final - s.t);
        last_good = s;
        const FlowRhs k1 = flow_rhs(s);
        axpy(s, 0.5 * h, k1, tmp);
        const FlowRhs k2 = flow_rhs(tmp);
        axpy(s, 0.5 * h, k2, tmp);
        const FlowRhs k3 = flow_rhs(tmp);
        axpy(s, h, k3, tmp);
        const FlowRhs k4 = flow_rhs(tmp);
        bool nan_hit = false, positivity_hit = false;
        for (std::size_t i = 0; i < n; ++i) {
            s.w0[i] += h / 6.0 * (k1.w0dot[i] + 2.0 * k2.w0dot[i] + 2.0 * k3.w0dot[i] + k4.w0dot[i]);
            s.w1[i] += h / 6.0 * (k1.w1dot[i] + 2.0 * k2.w1dot[i] + 2.0 * k3.w1dot[i] + k4.w1dot[i]);
            s.w2[i] += h / 6.0 * (k1.w2dot[i] + 2.0 * k2.w2dot[i] + 2.0 * k3.w2dot[i] + k4.w2dot[i]);
            if (!std::isfinite(s.w0[i]) || !std::isfinite(s.w1[i]) || !std::isfinite(s.w2[i])) nan_hit = true;
            else if (s.w0[i] < -30.0) positivity_hit = true;  // v0 -> 0: existence lost
        }
        s.t += h;
        if (nan_hit || positivity_hit) {
            traj.status = nan_hit ? "aborted_nan" : "aborted_positivity";
            traj.final_state = std::move(last_good);
            return traj;
        }
        if (((step + 1) % snap_every == 0 || step + 1 == steps) && traj.times.back() != s.t) record(s);
    }
    traj.final_state = std::move(s);
    return traj;
}

// Forward linearized evolution eta(t) = exp(t D) eta0 via the symmetric
// flux-form discretization and RK4 (stability-bounded steps).
inline TensorPerturbation linearized_evolve(const SpectralProblem& sp, const TensorPerturbation& h0,
                                            double t_final)
{
    if (!(t_final >= 0.0)) throw std::invalid_argument("linearized_evolve: t_final must be >= 0");
    // crude two-sided bound on the pencil spectrum for the step size
    double bound = 1.0;
    for (std::size_t i = 0; i < sp.cells(); ++i) {
        for (int c = 0; c < sp.block; ++c) {
            double row = std::abs(sp.Kdiag[i](c, c));
            for (int d = 0; d < sp.block; ++d)
                if (d != c) row += std::abs(sp.Kdiag[i](c, d));
            if (i > 0) row += sp.Koff[i - 1].col(c).cwiseAbs().sum();
            if (i + 1 < sp.cells()) row += sp.Koff[i].row(c).cwiseAbs().sum();
            bound = std::max(bound, row / sp.Mdiag[i](c));
        }
    }
    const double dt = 2.5 / bound;
    const long steps = std::max(1L, static_cast<long>(std::ceil(t_final / dt)));
    const double h = t_final / static_cast<double>(steps);

    Eigen::VectorXd u = tensor_to_vector(h0);
    detail::zero_pinned(sp, u);
    auto rhs = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd r = detail::apply_K(sp, v);
        for (std::size_t i = 0; i < sp.dofs(); ++i) r(i) /= sp.Mdiag[i / sp.block](static_cast<int>(i % sp.block));
        detail::zero_pinned(sp, r);
        return r;
    };
    for (long s = 0; s < steps; ++s) {
        const Eigen::VectorXd k1 = rhs(u);
        const Eigen::VectorXd k2 = rhs(u + 0.5 * h * k1);
        const Eigen::VectorXd k3 = rhs(u + 0.5 * h * k2);
        const Eigen::VectorXd k4 = rhs(u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return vector_to_tensor(u);
}

// Backward evolution is well-posed only on the span of computed eigentensors:
// coefficients contract as exp(-lambda t). Refuses initial data off the span.
inline TensorPerturbation linearized_evolve_backward(const OperatorCoefficients& coeffs,
                                                     const std::vector<EigenPair>& modes,
                                                     const TensorPerturbation& h0, double t,
                                                     double span_tol = 1e-6)
{
    if (!(t >= 0.0)) throw std::invalid_argument("linearized_evolve_backward: t must be >= 0");
    if (modes.empty()) throw std::invalid_argument("linearized_evolve_backward: no modes supplied");
    const std::size_t n = h0.size();
    std::vector<double> c(modes.size());
    TensorPerturbation res = h0;
    for (std::size_t m = 0; m < modes.size(); ++m) {
        c[m] = weighted_inner_product(h0, modes[m].tensor, coeffs);
        for (std::size_t i = 0; i < n; ++i) {
            res.eta0[i] -= c[m] * modes[m].tensor.eta0[i];
            res.eta1[i] -= c[m] * modes[m].tensor.eta1[i];
            res.eta2[i] -= c[m] * modes[m].tensor.eta2[i];
        }
    }
    const double h0n = weighted_norm(h0, coeffs);
    if (weighted_norm(res, coeffs) > span_tol * std::max(1e-300, h0n))
        throw std::invalid_argument("linearized_evolve_backward: initial data not in the eigen-span "
                                    "(backward heat flow is ill-posed off it)");
    TensorPerturbation out = TensorPerturbation::zero(n);
    for (std::size_t m = 0; m < modes.size(); ++m) {
        const double a = c[m] * std::exp(-modes[m].lambda * t);
        for (std::size_t i = 0; i < n; ++i) {
            out.eta0[i] += a * modes[m].tensor.eta0[i];
            out.eta1[i] += a * modes[m].tensor.eta1[i];
            out.eta2[i] += a * modes[m].tensor.eta2[i];
        }
    }
    return out;
}

// Least-squares slope of log(norm) vs t over the snapshots inside [t0, t1].
inline double growth_rate(const FlowTrajectory& traj, double t0, double t1)
{
    Field ts, ls;
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        if (traj.times[i] < t0 || traj.times[i] > t1) continue;
        if (!(traj.norms[i] > 0.0)) throw std::invalid_argument("growth_rate: non-positive norm in window");
        ts.push_back(traj.times[i]);
        ls.push_back(std::log(traj.norms[i]));
    }
    if (ts.size() < 3) throw std::invalid_argument("growth_rate: need at least 3 snapshots in window");
    return fit_line(ts, ls).slope;
}

// growth rate of the distance between two synchronized trajectories
inline double growth_rate_relative(const FlowTrajectory& a, const FlowTrajectory& b, double t0, double t1)
{
    if (a.states.empty() || b.states.empty())
        throw std::invalid_argument("growth_rate_relative: trajectories must record states");
    Field ts, ls;
    const std::size_t m = std::min(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < m; ++i) {
        const double t = a.states[i].t;
        if (std::abs(t - b.states[i].t) > 1e-9 * std::max(1.0, std::abs(t)))
            throw std::invalid_argument("growth_rate_relative: snapshot times differ");
        if (t < t0 || t > t1) continue;
        const double d = state_distance(a.states[i], b.states[i]);
        if (!(d > 0.0)) continue;
        ts.push_back(t);
        ls.push_back(std::log(d));
    }
    if (ts.size() < 3) throw std::invalid_argument("growth_rate_relative: need at least 3 snapshots in window");
    return fit_line(ts, ls).slope;
}

} // namespace warpflow
