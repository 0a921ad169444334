#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace warpflow {

// Thrown when an algorithm fails for numerical (not contract) reasons.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

using Field = std::vector<double>;

// Cell-centered uniform grid on [0, length]: x_k = (k + 1/2) * dx, k = 0..n-1.
// The singular origin sits on a cell face, so every sample has x > 0.
inline Field staggered_grid(double length, std::size_t n)
{
    if (n == 0 || length <= 0.0)
        throw std::invalid_argument("staggered_grid: need n > 0 and length > 0");
    Field x(n);
    const double dx = length / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
        x[k] = (static_cast<double>(k) + 0.5) * dx;
    return x;
}

inline double grid_spacing(const Field& x)
{
    if (x.size() < 2) throw std::invalid_argument("grid_spacing: need >= 2 points");
    return x[1] - x[0];
}

inline bool is_uniform(const Field& x, double rel_tol = 1e-10)
{
    if (x.size() < 2) return true;
    const double dx = x[1] - x[0];
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        if (std::abs((x[i + 1] - x[i]) - dx) > rel_tol * std::abs(dx)) return false;
    return true;
}

inline bool all_finite(const Field& v)
{
    return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

// Least-squares line y = a + b*t; returns {a, b, r_squared}.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 1.0;
};

inline LineFit fit_line(const Field& t, const Field& y)
{
    if (t.size() != y.size() || t.size() < 2)
        throw std::invalid_argument("fit_line: need two equal-length samples of size >= 2");
    const double n = static_cast<double>(t.size());
    double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        st += t[i];
        sy += y[i];
        stt += t[i] * t[i];
        sty += t[i] * y[i];
        syy += y[i] * y[i];
    }
    const double det = n * stt - st * st;
    if (std::abs(det) < 1e-300) throw numerical_error("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = (n * sty - st * sy) / det;
    f.intercept = (sy - f.slope * st) / n;
    double ss_res = 0, ss_tot = 0;
    const double ybar = sy / n;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * t[i]);
        ss_res += r * r;
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    f.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

inline double max_abs(const Field& v)
{
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

// ---------------------------------------------------------------------------
// Truncated power series with double coefficients, c[k] multiplying x^k.
// Used for the smooth-closure origin series and its algebra; all operations
// truncate at the common length.
// ---------------------------------------------------------------------------
class PowerSeries {
public:
    PowerSeries() = default;
    explicit PowerSeries(std::size_t len) : c_(len, 0.0) {}
    explicit PowerSeries(std::vector<double> coeffs) : c_(std::move(coeffs)) {}

    std::size_t size() const { return c_.size(); }
    double operator[](std::size_t k) const { return k < c_.size() ? c_[k] : 0.0; }
    double& at(std::size_t k)
    {
        if (k >= c_.size()) c_.resize(k + 1, 0.0);
        return c_[k];
    }
    const std::vector<double>& coeffs() const { return c_; }

    PowerSeries truncated(std::size_t len) const
    {
        PowerSeries r(len);
        for (std::size_t k = 0; k < len && k < c_.size(); ++k) r.c_[k] = c_[k];
        return r;
    }

    friend PowerSeries operator+(const PowerSeries& a, const PowerSeries& b)
    {
        PowerSeries r(std::max(a.size(), b.size()));
        for (std::size_t k = 0; k < r.size(); ++k) r.c_[k] = a[k] + b[k];
        return r;
    }
    friend PowerSeries operator-(const PowerSeries& a, const PowerSeries& b)
    {
        PowerSeries r(std::max(a.size(), b.size()));
        for (std::size_t k = 0; k < r.size(); ++k) r.c_[k] = a[k] - b[k];
        return r;
    }
    friend PowerSeries operator*(double s, const PowerSeries& a)
    {
        PowerSeries r(a.size());
        for (std::size_t k = 0; k < r.size(); ++k) r.c_[k] = s * a[k];
        return r;
    }

    // product truncated at length max(a.size, b.size)
    friend PowerSeries operator*(const PowerSeries& a, const PowerSeries& b)
    {
        const std::size_t len = std::max(a.size(), b.size());
        PowerSeries r(len);
        for (std::size_t i = 0; i < std::min(a.size(), len); ++i) {
            if (a[i] == 0.0) continue;
            for (std::size_t j = 0; i + j < len && j < b.size(); ++j)
                r.c_[i + j] += a[i] * b[j];
        }
        return r;
    }

    // series division a/b, requires b[0] != 0
    friend PowerSeries operator/(const PowerSeries& a, const PowerSeries& b)
    {
        if (b[0] == 0.0) throw numerical_error("PowerSeries: division by series with zero constant term");
        const std::size_t len = std::max(a.size(), b.size());
        PowerSeries q(len);
        for (std::size_t k = 0; k < len; ++k) {
            double s = a[k];
            for (std::size_t j = 1; j <= k; ++j) s -= b[j] * q.c_[k - j];
            q.c_[k] = s / b[0];
        }
        return q;
    }

    PowerSeries derivative() const
    {
        if (c_.size() <= 1) return PowerSeries(std::size_t{1});
        PowerSeries r(c_.size() - 1);
        for (std::size_t k = 1; k < c_.size(); ++k) r.c_[k - 1] = static_cast<double>(k) * c_[k];
        return r;
    }

    double eval(double x) const
    {
        double r = 0.0;
        for (std::size_t k = c_.size(); k-- > 0;) r = r * x + c_[k];
        return r;
    }

    // Radius inside which the last retained nonzero term contributes less than
    // rel_tol relative to the leading one; guards evaluation of a truncation.
    double trust_radius(double rel_tol = 1e-10) const
    {
        std::size_t lead = 0;
        while (lead < c_.size() && c_[lead] == 0.0) ++lead;
        if (lead == c_.size()) return std::numeric_limits<double>::infinity();
        std::size_t last = c_.size() - 1;
        while (last > lead && c_[last] == 0.0) --last;
        if (last == lead) return std::numeric_limits<double>::infinity();
        const double ratio = std::abs(c_[lead] / c_[last]) * rel_tol;
        return std::pow(ratio, 1.0 / static_cast<double>(last - lead));
    }

private:
    std::vector<double> c_;
};

} // namespace warpflow
