#pragma once

#include "fdesolve/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fdesolve {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Default allowed mismatch between a tail expression and the first sample
/// of the sampled span.
inline constexpr double kDefaultContinuityTol = 1e-9;

enum class Interp { linear, cubic_hermite };

/// Quadrature used for running integrals. `cubic` integrates the local
/// cubic through the four nearest samples (fourth order on smooth data).
enum class Quadrature { trapezoid, cubic };

struct GridSpec {
    std::size_t points_per_window = 256;

    void validate() const
    {
        if (points_per_window < 2) {
            throw Error(ErrorKind::invalid_argument, "points_per_window must be at least 2");
        }
    }
};

/// Uniform grid on [a, b] with both endpoints reproduced exactly.
inline std::vector<double> uniform_grid(double a, double b, std::size_t points)
{
    if (points < 2 || !(a < b)) {
        throw Error(ErrorKind::invalid_argument, "uniform_grid needs a < b and at least 2 points");
    }
    std::vector<double> t(points);
    const double len = b - a;
    const double last = static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
        t[i] = a + len * (static_cast<double>(i) / last);
    }
    t.back() = b;
    return t;
}

/// Analytic continuation of a function outside its sampled span. The domain
/// is the closed interval [lo, hi] (either end may be infinite).
struct Tail {
    std::function<double(double)> fn;
    double lo = -kInfinity;
    double hi = kInfinity;

    bool covers(double t) const noexcept { return t >= lo && t <= hi; }
};

/// One interval of a piecewise function in Hermite form.
struct Segment {
    double t0 = 0, t1 = 0;
    double y0 = 0, y1 = 0;
    double m0 = 0, m1 = 0;
    bool cubic = false;

    double operator()(double t) const noexcept
    {
        const double h = t1 - t0;
        const double s = (t - t0) / h;
        if (!cubic) {
            return (1.0 - s) * y0 + s * y1;
        }
        const double r = 1.0 - s;
        const double h00 = (1.0 + 2.0 * s) * r * r;
        const double h10 = s * r * r;
        const double h01 = s * s * (3.0 - 2.0 * s);
        const double h11 = s * s * (s - 1.0);
        return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    }
};

namespace detail {

inline void check_grid(std::span<const double> grid, std::span<const double> values)
{
    if (grid.size() < 2) {
        throw Error(ErrorKind::invalid_argument, "grid needs at least 2 points");
    }
    if (grid.size() != values.size()) {
        throw Error(ErrorKind::invalid_argument, "sample count differs from breakpoint count");
    }
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) {
            throw Error(ErrorKind::invalid_argument, "breakpoints must be strictly increasing");
        }
    }
}

/// Index i such that grid[i] <= t <= grid[i+1], clamped to the valid range.
inline std::size_t locate(std::span<const double> grid, double t) noexcept
{
    const auto it = std::upper_bound(grid.begin(), grid.end(), t);
    const auto raw = static_cast<std::ptrdiff_t>(it - grid.begin()) - 1;
    const auto last = static_cast<std::ptrdiff_t>(grid.size()) - 2;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(raw, 0, last));
}

/// Three-point derivative estimates for data supplied without slopes.
inline std::vector<double> finite_difference_slopes(std::span<const double> t, std::span<const double> y)
{
    const std::size_t n = t.size();
    std::vector<double> m(n);
    if (n == 2) {
        m[0] = m[1] = (y[1] - y[0]) / (t[1] - t[0]);
        return m;
    }
    auto endpoint = [](double x0, double x1, double x2, double y0, double y1, double y2) {
        return y0 * (2 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2)) +
               y1 * (x0 - x2) / ((x1 - x0) * (x1 - x2)) +
               y2 * (x0 - x1) / ((x2 - x0) * (x2 - x1));
    };
    m[0] = endpoint(t[0], t[1], t[2], y[0], y[1], y[2]);
    m[n - 1] = endpoint(t[n - 1], t[n - 2], t[n - 3], y[n - 1], y[n - 2], y[n - 3]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double hl = t[i] - t[i - 1];
        const double hr = t[i + 1] - t[i];
        const double dl = (y[i] - y[i - 1]) / hl;
        const double dr = (y[i + 1] - y[i]) / hr;
        m[i] = (dl * hr + dr * hl) / (hl + hr);
    }
    return m;
}

}  // namespace detail

/// A scalar function of time: samples on strictly increasing breakpoints,
/// an interpolation rule between them, and an optional analytic tail used
/// outside the sampled span (history before t0, terminal data after tau0).
///
/// A function may also be tail-only (no samples), which is how prescribed
/// history and terminal data are usually supplied.
class PiecewiseFunction {
public:
    PiecewiseFunction() = default;

    PiecewiseFunction(std::vector<double> breakpoints,
                      std::vector<double> samples,
                      Interp interp = Interp::linear,
                      std::optional<Tail> tail = std::nullopt,
                      std::vector<double> slopes = {},
                      double continuity_tol = kDefaultContinuityTol)
        : t_(std::move(breakpoints))
        , y_(std::move(samples))
        , m_(std::move(slopes))
        , interp_(interp)
        , tail_(std::move(tail))
    {
        detail::check_grid(t_, y_);
        if (interp_ == Interp::cubic_hermite) {
            if (m_.empty()) {
                m_ = detail::finite_difference_slopes(t_, y_);
            } else if (m_.size() != t_.size()) {
                throw Error(ErrorKind::invalid_argument, "slope count differs from breakpoint count");
            }
        } else {
            m_.clear();
        }
        check_junctions(continuity_tol);
    }

    static PiecewiseFunction from_tail(Tail tail)
    {
        PiecewiseFunction f;
        f.tail_ = std::move(tail);
        return f;
    }

    static PiecewiseFunction constant(double c)
    {
        return from_tail(Tail{[c](double) { return c; }, -kInfinity, kInfinity});
    }

    bool has_span() const noexcept { return !t_.empty(); }
    bool has_tail() const noexcept { return tail_.has_value(); }

    double span_lo() const { return t_.at(0); }
    double span_hi() const { return t_.at(t_.size() - 1); }

    bool in_span(double t) const noexcept { return has_span() && t >= t_.front() && t <= t_.back(); }

    bool defined_at(double t) const noexcept { return in_span(t) || (tail_ && tail_->covers(t)); }

    double operator()(double t) const
    {
        if (in_span(t)) {
            return segment(detail::locate(t_, t))(t);
        }
        if (tail_ && tail_->covers(t)) {
            return tail_->fn(t);
        }
        throw Error(ErrorKind::no_tail_defined,
                    "no sampled value or tail at t = " + std::to_string(t));
    }

    double eval(double t) const { return (*this)(t); }

    std::span<const double> breakpoints() const noexcept { return t_; }
    std::span<const double> samples() const noexcept { return y_; }
    /// Hermite slopes (empty for linear interpolation).
    std::span<const double> slopes() const noexcept { return m_; }
    Interp interp() const noexcept { return interp_; }
    const std::optional<Tail>& tail() const noexcept { return tail_; }

    std::size_t interval_of(double t) const noexcept { return detail::locate(t_, t); }

    Segment segment(std::size_t i) const
    {
        Segment s{t_[i], t_[i + 1], y_[i], y_[i + 1], 0.0, 0.0, interp_ == Interp::cubic_hermite};
        if (s.cubic) {
            s.m0 = m_[i];
            s.m1 = m_[i + 1];
        } else {
            s.m0 = s.m1 = (s.y1 - s.y0) / (s.t1 - s.t0);
        }
        return s;
    }

private:
    void check_junctions(double tol) const
    {
        if (!tail_) {
            return;
        }
        auto check = [&](double t, double sample) {
            if (!tail_->covers(t)) {
                return;
            }
            const double gap = std::abs(tail_->fn(t) - sample);
            if (!(gap <= tol)) {
                throw Error(ErrorKind::discontinuous_junction,
                            "tail and samples disagree by " + std::to_string(gap) +
                                " at t = " + std::to_string(t));
            }
        };
        check(t_.front(), y_.front());
        check(t_.back(), y_.back());
    }

    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<double> m_;
    Interp interp_ = Interp::linear;
    std::optional<Tail> tail_;
};

/// An n-component vector function on a window [t_start, t_end]: every
/// component is sampled on the same grid and carries its prescribed tail.
class Trajectory {
public:
    explicit Trajectory(std::vector<PiecewiseFunction> components)
        : components_(std::move(components))
    {
        if (components_.empty()) {
            throw Error(ErrorKind::invalid_argument, "trajectory needs at least one component");
        }
        const auto grid = components_.front().breakpoints();
        if (grid.empty()) {
            throw Error(ErrorKind::invalid_argument, "trajectory components must be sampled");
        }
        for (const auto& c : components_) {
            const auto g = c.breakpoints();
            if (!std::equal(g.begin(), g.end(), grid.begin(), grid.end())) {
                throw Error(ErrorKind::grid_mismatch, "trajectory components use different grids");
            }
        }
    }

    std::size_t size() const noexcept { return components_.size(); }
    const PiecewiseFunction& component(std::size_t k) const { return components_.at(k); }
    const std::vector<PiecewiseFunction>& components() const noexcept { return components_; }

    double operator()(std::size_t k, double t) const { return components_.at(k)(t); }

    std::span<const double> grid() const noexcept { return components_.front().breakpoints(); }
    double t_start() const noexcept { return grid().front(); }
    double t_end() const noexcept { return grid().back(); }

private:
    std::vector<PiecewiseFunction> components_;
};

/// Supremum of |x - y| over the shared span. Piecewise-linear differences
/// peak at breakpoints; Hermite differences are cubic per interval and are
/// also checked at their interior critical points.
inline double sup_difference(const PiecewiseFunction& x, const PiecewiseFunction& y)
{
    const auto gx = x.breakpoints();
    const auto gy = y.breakpoints();
    if (!std::equal(gx.begin(), gx.end(), gy.begin(), gy.end())) {
        throw Error(ErrorKind::grid_mismatch, "functions are sampled on different grids");
    }
    if (gx.empty()) {
        throw Error(ErrorKind::grid_mismatch, "functions have no sampled span");
    }
    double sup = 0.0;
    const auto xs = x.samples();
    const auto ys = y.samples();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sup = std::max(sup, std::abs(xs[i] - ys[i]));
    }
    if (x.interp() == Interp::linear && y.interp() == Interp::linear) {
        return sup;
    }
    for (std::size_t i = 0; i + 1 < gx.size(); ++i) {
        const Segment sx = x.segment(i);
        const Segment sy = y.segment(i);
        const double h = sx.t1 - sx.t0;
        // difference as a*s^3 + b*s^2 + c*s + d on s in [0, 1]
        const double y0 = sx.y0 - sy.y0;
        const double y1 = sx.y1 - sy.y1;
        const double m0 = h * (sx.m0 - sy.m0);
        const double m1 = h * (sx.m1 - sy.m1);
        const double a = 2 * y0 + m0 - 2 * y1 + m1;
        const double b = -3 * y0 - 2 * m0 + 3 * y1 - m1;
        const double c = m0;
        auto probe = [&](double s) {
            if (s > 0.0 && s < 1.0) {
                const double t = sx.t0 + s * h;
                sup = std::max(sup, std::abs(sx(t) - sy(t)));
            }
        };
        // roots of 3a s^2 + 2b s + c
        const double qa = 3 * a;
        const double qb = 2 * b;
        const double scale = std::abs(qa) + std::abs(qb) + std::abs(c);
        if (scale == 0.0) {
            continue;
        }
        if (std::abs(qa) <= 1e-14 * scale) {
            if (qb != 0.0) {
                probe(-c / qb);
            }
            continue;
        }
        const double disc = qb * qb - 4 * qa * c;
        if (disc < 0.0) {
            continue;
        }
        const double root = std::sqrt(disc);
        const double qq = -0.5 * (qb + std::copysign(root, qb));
        if (qq != 0.0) {
            probe(qq / qa);
            probe(c / qq);
        } else {
            probe(0.0);
        }
    }
    return sup;
}

/// rho(x, y): sum over components of the sup-norm gap on the window.
inline double distance(const Trajectory& x, const Trajectory& y)
{
    if (x.size() != y.size()) {
        throw Error(ErrorKind::grid_mismatch, "trajectories have different component counts");
    }
    double rho = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        rho += sup_difference(x.component(k), y.component(k));
    }
    return rho;
}

namespace detail {

inline double lagrange(std::span<const double> t, std::span<const double> y,
                       std::size_t first, std::size_t count, double x) noexcept
{
    double sum = 0.0;
    for (std::size_t s = first; s < first + count; ++s) {
        double basis = 1.0;
        for (std::size_t r = first; r < first + count; ++r) {
            if (r != s) {
                basis *= (x - t[r]) / (t[s] - t[r]);
            }
        }
        sum += basis * y[s];
    }
    return sum;
}

/// Integral over [a, b] (a sub-interval of [t_i, t_{i+1}]) of the local
/// interpolant the rule integrates.
inline double panel_integral(std::span<const double> t, std::span<const double> y,
                             std::size_t i, double a, double b, Quadrature rule) noexcept
{
    const std::size_t n = t.size();
    if (rule == Quadrature::trapezoid || n == 2) {
        const double h = t[i + 1] - t[i];
        auto lin = [&](double x) {
            const double s = (x - t[i]) / h;
            return (1.0 - s) * y[i] + s * y[i + 1];
        };
        return 0.5 * (b - a) * (lin(a) + lin(b));
    }
    std::size_t first = 0;
    std::size_t count = 3;
    if (n >= 4) {
        count = 4;
        first = i == 0 ? 0 : std::min(i - 1, n - 4);
    }
    // two-point Gauss-Legendre is exact for the cubic interpolant
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    const double off = half / std::sqrt(3.0);
    return half * (lagrange(t, y, first, count, mid - off) + lagrange(t, y, first, count, mid + off));
}

}  // namespace detail

/// Running integral of sampled data from grid.front(): result[i] = int_{t_0}^{t_i}.
inline std::vector<double> running_integral(std::span<const double> grid,
                                            std::span<const double> values,
                                            Quadrature rule = Quadrature::trapezoid)
{
    detail::check_grid(grid, values);
    std::vector<double> acc(grid.size(), 0.0);
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        acc[i + 1] = acc[i] + detail::panel_integral(grid, values, i, grid[i], grid[i + 1], rule);
    }
    return acc;
}

namespace detail {

inline double running_at(std::span<const double> grid, std::span<const double> values,
                         std::span<const double> acc, double t, Quadrature rule) noexcept
{
    const std::size_t i = locate(grid, t);
    if (t == grid[i]) {
        return acc[i];
    }
    if (t == grid[i + 1]) {
        return acc[i + 1];
    }
    return acc[i] + panel_integral(grid, values, i, grid[i], t, rule);
}

inline void check_in_span(std::span<const double> grid, double t)
{
    if (!(t >= grid.front() && t <= grid.back())) {
        throw Error(ErrorKind::out_of_span, "t = " + std::to_string(t) + " lies outside the grid span");
    }
}

}  // namespace detail

/// Definite integral of sampled data over [a, b] within the grid span.
inline double integrate(std::span<const double> grid, std::span<const double> values,
                        double a, double b, Quadrature rule = Quadrature::trapezoid)
{
    detail::check_grid(grid, values);
    detail::check_in_span(grid, a);
    detail::check_in_span(grid, b);
    if (a > b) {
        throw Error(ErrorKind::invalid_argument, "integrate requires a <= b");
    }
    const auto acc = running_integral(grid, values, rule);
    return detail::running_at(grid, values, acc, b, rule) - detail::running_at(grid, values, acc, a, rule);
}

/// t -> int_{from}^{t} f, sampled on the integrand's grid. The slopes of the
/// result are the integrand samples, so the cubic rule yields a Hermite
/// interpolant; the trapezoid rule yields a piecewise-linear one.
inline PiecewiseFunction cumulative_integrate(std::span<const double> grid,
                                              std::span<const double> values,
                                              double from,
                                              Quadrature rule = Quadrature::trapezoid)
{
    detail::check_grid(grid, values);
    detail::check_in_span(grid, from);
    const auto acc = running_integral(grid, values, rule);
    const double base = detail::running_at(grid, values, acc, from, rule);
    std::vector<double> samples(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        samples[i] = acc[i] - base;
    }
    std::vector<double> breakpoints(grid.begin(), grid.end());
    if (rule == Quadrature::cubic) {
        return PiecewiseFunction(std::move(breakpoints), std::move(samples), Interp::cubic_hermite,
                                 std::nullopt, std::vector<double>(values.begin(), values.end()));
    }
    return PiecewiseFunction(std::move(breakpoints), std::move(samples), Interp::linear);
}

}  // namespace fdesolve
