#pragma once

// Independent reference solutions. Nothing in here touches the Picard
// solver; the test suite and `--verify` compare the solver against these.

#include "fdesolve/error.hpp"
#include "fdesolve/expr.hpp"
#include "fdesolve/funcspace.hpp"
#include "fdesolve/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fdesolve::oracle {

/// Real polynomial sum_i c[i] t^i with exact coefficient arithmetic.
class Polynomial {
public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coefficients)
        : c_(std::move(coefficients))
    {
        trim();
    }

    static Polynomial constant(double v) { return Polynomial({v}); }
    static Polynomial identity() { return Polynomial({0.0, 1.0}); }

    const std::vector<double>& coefficients() const noexcept { return c_; }

    /// -1 for the zero polynomial.
    int degree() const noexcept { return static_cast<int>(c_.size()) - 1; }

    double coefficient(std::size_t i) const noexcept { return i < c_.size() ? c_[i] : 0.0; }

    double operator()(double t) const noexcept
    {
        double acc = 0.0;
        for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
            acc = acc * t + *it;
        }
        return acc;
    }

    Polynomial derivative() const
    {
        std::vector<double> d;
        for (std::size_t i = 1; i < c_.size(); ++i) {
            d.push_back(static_cast<double>(i) * c_[i]);
        }
        return Polynomial(std::move(d));
    }

    /// Antiderivative vanishing at t = 0.
    Polynomial antiderivative() const
    {
        std::vector<double> a(c_.size() + 1, 0.0);
        for (std::size_t i = 0; i < c_.size(); ++i) {
            a[i + 1] = c_[i] / static_cast<double>(i + 1);
        }
        return Polynomial(std::move(a));
    }

    /// t -> p(t - tau).
    Polynomial shifted(double tau) const
    {
        // Horner in the composed variable (t - tau).
        Polynomial acc;
        const Polynomial lin({-tau, 1.0});
        for (auto it = c_.rbegin(); it != c_.rend(); ++it) {
            acc = acc * lin + Polynomial::constant(*it);
        }
        return acc;
    }

    /// t -> p(-t).
    Polynomial reflected() const
    {
        std::vector<double> r = c_;
        for (std::size_t i = 1; i < r.size(); i += 2) {
            r[i] = -r[i];
        }
        return Polynomial(std::move(r));
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b)
    {
        std::vector<double> s(std::max(a.c_.size(), b.c_.size()), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = a.coefficient(i) + b.coefficient(i);
        }
        return Polynomial(std::move(s));
    }

    friend Polynomial operator-(const Polynomial& a) { return a * -1.0; }

    friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-b); }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b)
    {
        if (a.c_.empty() || b.c_.empty()) {
            return {};
        }
        std::vector<double> p(a.c_.size() + b.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i) {
            for (std::size_t j = 0; j < b.c_.size(); ++j) {
                p[i + j] += a.c_[i] * b.c_[j];
            }
        }
        return Polynomial(std::move(p));
    }

    friend Polynomial operator*(const Polynomial& a, double s)
    {
        std::vector<double> p = a.c_;
        for (double& v : p) {
            v *= s;
        }
        return Polynomial(std::move(p));
    }

    friend Polynomial operator*(double s, const Polynomial& a) { return a * s; }

private:
    void trim()
    {
        while (!c_.empty() && c_.back() == 0.0) {
            c_.pop_back();
        }
    }

    std::vector<double> c_;
};

/// x_k'(t) = sum_j sum_m a_kjm(t) x_j(t - tau_jm) + b_k(t) for t > t0,
/// x = history on (-inf, t0]. Every datum is a polynomial and every lag is a
/// positive constant.
struct PolynomialDelaySystem {
    std::size_t n = 0;
    std::size_t N = 0;
    std::vector<Polynomial> coefficient;   // index (k * n + j) * N + m
    std::vector<Polynomial> forcing;       // n
    std::vector<double> lag;               // index j * N + m
    std::vector<Polynomial> history;       // n
    double t0 = 0.0;

    std::size_t coefficient_index(std::size_t k, std::size_t j, std::size_t m) const noexcept
    {
        return (k * n + j) * N + m;
    }

    void check() const
    {
        if (n == 0 || N == 0 || coefficient.size() != n * n * N || forcing.size() != n || lag.size() != n * N ||
            history.size() != n) {
            throw Error(ErrorKind::invalid_argument, "polynomial system arrays do not match n and N");
        }
        for (double tau : lag) {
            if (!(tau > 0.0) || !std::isfinite(tau)) {
                throw Error(ErrorKind::nonconstant_delay, "lags must be positive finite constants");
            }
        }
    }

    /// The same system in the solver's problem representation.
    LinearRetardedSystem to_linear_system() const
    {
        check();
        LinearRetardedSystem sys;
        sys.n_components = n;
        sys.n_deviations = N;
        sys.anchor = t0;
        for (const auto& a : coefficient) {
            sys.coefficient.push_back([a](double t) { return a(t); });
        }
        for (const auto& b : forcing) {
            sys.forcing.push_back([b](double t) { return b(t); });
        }
        for (double tau : lag) {
            sys.deviation.push_back([tau](double t) { return t - tau; });
        }
        for (const auto& h : history) {
            sys.prescribed.push_back(
                PiecewiseFunction::from_tail(Tail{[h](double t) { return h(t); }, -kInfinity, t0}));
        }
        return sys;
    }
};

/// Terminal-value counterpart: x_k'(t) = sum a_kjm(t) x_j(t + lead_jm) + b_k(t)
/// for t < tau0, x = terminal data on [tau0, +inf).
struct PolynomialAdvanceSystem {
    std::size_t n = 0;
    std::size_t N = 0;
    std::vector<Polynomial> coefficient;   // index (k * n + j) * N + m
    std::vector<Polynomial> forcing;
    std::vector<double> lead;              // index j * N + m
    std::vector<Polynomial> terminal;
    double tau0 = 0.0;

    /// Time reversal psi(t) = x(-t): psi'(t) = -sum a(-t) psi(t - lead) - b(-t).
    PolynomialDelaySystem reflected() const
    {
        PolynomialDelaySystem r;
        r.n = n;
        r.N = N;
        r.t0 = -tau0;
        r.lag = lead;
        for (const auto& a : coefficient) {
            r.coefficient.push_back(-a.reflected());
        }
        for (const auto& b : forcing) {
            r.forcing.push_back(-b.reflected());
        }
        for (const auto& s : terminal) {
            r.history.push_back(s.reflected());
        }
        return r;
    }
};

/// Solution pieces on abutting intervals [a_i, b_i] after t0, every
/// component represented by one polynomial per interval.
class PiecewisePolynomialSolution {
public:
    struct Interval {
        double a = 0.0;
        double b = 0.0;
        std::vector<Polynomial> components;
    };

    PiecewisePolynomialSolution(std::vector<Polynomial> history, double t0, std::vector<Interval> intervals)
        : history_(std::move(history))
        , t0_(t0)
        , intervals_(std::move(intervals))
    {
    }

    std::size_t components() const noexcept { return history_.size(); }
    double t0() const noexcept { return t0_; }
    double horizon() const noexcept { return intervals_.empty() ? t0_ : intervals_.back().b; }
    const std::vector<Interval>& intervals() const noexcept { return intervals_; }
    const std::vector<Polynomial>& history() const noexcept { return history_; }

    /// The polynomial representing component k near t (history for t <= t0).
    /// At an interior breakpoint the left piece is returned.
    const Polynomial& polynomial_at(std::size_t k, double t) const
    {
        if (t <= t0_) {
            return history_.at(k);
        }
        if (t > horizon()) {
            throw Error(ErrorKind::out_of_span, "t = " + std::to_string(t) + " beyond the oracle horizon");
        }
        const auto it = std::lower_bound(intervals_.begin(), intervals_.end(), t,
                                         [](const Interval& iv, double x) { return iv.b < x; });
        return it->components.at(k);
    }

    double value(std::size_t k, double t) const { return polynomial_at(k, t)(t); }
    double operator()(std::size_t k, double t) const { return value(k, t); }

    /// Largest disagreement of neighbouring pieces (history included) at
    /// their shared endpoint.
    double max_junction_gap() const
    {
        double gap = 0.0;
        for (std::size_t i = 0; i < intervals_.size(); ++i) {
            for (std::size_t k = 0; k < components(); ++k) {
                const double t = intervals_[i].a;
                const Polynomial& left = i == 0 ? history_[k] : intervals_[i - 1].components[k];
                gap = std::max(gap, std::abs(left(t) - intervals_[i].components[k](t)));
            }
        }
        return gap;
    }

private:
    std::vector<Polynomial> history_;
    double t0_;
    std::vector<Interval> intervals_;
};

/// Exact method of steps. Each step has the length of the smallest lag, so
/// every delayed argument falls into already computed pieces; the step is
/// split at every translate b + tau of an existing breakpoint b, making the
/// right-hand side a single polynomial on each sub-interval, which is then
/// integrated by coefficients.
inline PiecewisePolynomialSolution method_of_steps(const PolynomialDelaySystem& sys, double horizon)
{
    sys.check();
    if (!(horizon > sys.t0)) {
        throw Error(ErrorKind::invalid_argument, "horizon must exceed t0");
    }
    const double min_lag = *std::min_element(sys.lag.begin(), sys.lag.end());
    std::vector<PiecewisePolynomialSolution::Interval> pieces;
    std::vector<double> breaks{sys.t0};
    const double eps = 1e-12 * std::max(1.0, std::abs(horizon));

    auto piece_for = [&](std::size_t j, double t) -> const Polynomial& {
        if (t <= sys.t0) {
            return sys.history[j];
        }
        const auto it = std::lower_bound(pieces.begin(), pieces.end(), t,
                                         [](const auto& iv, double x) { return iv.b < x; });
        return it->components[j];
    };

    double start = sys.t0;
    while (start < horizon) {
        const double end = horizon - start <= min_lag + eps ? horizon : start + min_lag;
        std::vector<double> cuts{start, end};
        for (double b : breaks) {
            for (double tau : sys.lag) {
                const double c = b + tau;
                if (c > start + eps && c < end - eps) {
                    cuts.push_back(c);
                }
            }
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end(), [eps](double x, double y) { return y - x <= eps; }),
                   cuts.end());
        cuts.back() = end;
        for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
            const double a = cuts[s];
            const double b = cuts[s + 1];
            const double mid = 0.5 * (a + b);
            PiecewisePolynomialSolution::Interval iv{a, b, {}};
            for (std::size_t k = 0; k < sys.n; ++k) {
                Polynomial rhs = sys.forcing[k];
                for (std::size_t j = 0; j < sys.n; ++j) {
                    for (std::size_t m = 0; m < sys.N; ++m) {
                        const double tau = sys.lag[j * sys.N + m];
                        const Polynomial delayed = piece_for(j, mid - tau).shifted(tau);
                        rhs = rhs + sys.coefficient[sys.coefficient_index(k, j, m)] * delayed;
                    }
                }
                const Polynomial prim = rhs.antiderivative();
                const double left = piece_for(k, a)(a);
                iv.components.push_back(prim + Polynomial::constant(left - prim(a)));
            }
            pieces.push_back(std::move(iv));
            breaks.push_back(b);
        }
        start = end;
    }
    return PiecewisePolynomialSolution(sys.history, sys.t0, std::move(pieces));
}

/// phi(t) = psi(-t) for the reflected delay system; evaluates the
/// terminal-value solution at original times t <= tau0.
class ReflectedSolution {
public:
    explicit ReflectedSolution(PiecewisePolynomialSolution inner)
        : inner_(std::move(inner))
    {
    }

    double value(std::size_t k, double t) const { return inner_.value(k, -t); }
    double operator()(std::size_t k, double t) const { return value(k, t); }
    const PiecewisePolynomialSolution& reflected() const noexcept { return inner_; }

private:
    PiecewisePolynomialSolution inner_;
};

/// Method of steps for the advanced system, marching left to t_start.
inline ReflectedSolution backward_method_of_steps(const PolynomialAdvanceSystem& sys, double t_start)
{
    if (!(t_start < sys.tau0)) {
        throw Error(ErrorKind::invalid_argument, "t_start must precede tau0");
    }
    return ReflectedSolution(method_of_steps(sys.reflected(), -t_start));
}

struct SeriesValue {
    double value = 0.0;
    /// Magnitude of the first omitted term.
    double truncation_estimate = 0.0;
};

/// Solution of phi'(t) = a phi(q t), phi(0) = 1:
/// sum_{m < terms} a^m q^{m(m-1)/2} t^m / m!.
inline SeriesValue pantograph_series(double a, double q, std::size_t terms, double t)
{
    if (terms < 1) {
        throw Error(ErrorKind::invalid_argument, "pantograph series needs at least one term");
    }
    // term_{m+1} = term_m * a * q^m * t / (m + 1)
    double term = 1.0;
    double qm = 1.0;
    double sum = 0.0;
    for (std::size_t m = 0; m < terms; ++m) {
        sum += term;
        term *= a * qm * t / static_cast<double>(m + 1);
        qm *= q;
    }
    return SeriesValue{sum, std::abs(term)};
}

/// dy = f(t, y) written into the third argument.
using OdeRhs = std::function<void(double, std::span<const double>, std::span<double>)>;

struct SampledTrajectory {
    std::vector<double> t;
    std::vector<std::vector<double>> y;   // y[i] is the state at t[i]

    const std::vector<double>& back() const { return y.back(); }
};

/// Classical fourth-order Runge-Kutta with fixed step; the last step is
/// shortened to land on the horizon.
inline SampledTrajectory rk4_reference(const OdeRhs& f, std::vector<double> y0, double t0, double step,
                                       double horizon)
{
    if (!(step > 0.0) || !(horizon >= t0)) {
        throw Error(ErrorKind::invalid_argument, "rk4 needs step > 0 and horizon >= t0");
    }
    const std::size_t dim = y0.size();
    SampledTrajectory out;
    out.t.push_back(t0);
    out.y.push_back(y0);
    std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
    std::vector<double> y = std::move(y0);
    const auto full_steps = static_cast<std::size_t>(std::floor((horizon - t0) / step + 1e-9));
    double t = t0;
    auto advance = [&](double h) {
        f(t, y, k1);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        f(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        f(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
        f(t + h, tmp, k4);
        for (std::size_t i = 0; i < dim; ++i) {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    };
    for (std::size_t s = 1; s <= full_steps; ++s) {
        advance(step);
        t = t0 + static_cast<double>(s) * step;
        if (t > horizon) {
            t = horizon;
        }
        out.t.push_back(t);
        out.y.push_back(y);
    }
    const double rest = horizon - t;
    if (rest > 1e-12 * std::max(1.0, std::abs(horizon))) {
        advance(rest);
        t = horizon;
        out.t.push_back(t);
        out.y.push_back(y);
    }
    return out;
}

/// Coefficient form of an expression in t only (numbers, t, + - *, division
/// by constants, nonnegative integer powers).
inline Polynomial to_polynomial(const expr::NodePtr& node)
{
    using expr::NodeKind;
    if (!node) {
        return {};
    }
    auto fail = [&](const std::string& why) -> Polynomial {
        throw Error(ErrorKind::nonpolynomial_input, "'" + expr::print(*node) + "' " + why);
    };
    switch (node->kind) {
    case NodeKind::number: return Polynomial::constant(node->value);
    case NodeKind::time: return Polynomial::identity();
    case NodeKind::placeholder: return fail("contains a placeholder");
    case NodeKind::negate: return -to_polynomial(node->args[0]);
    case NodeKind::add: return to_polynomial(node->args[0]) + to_polynomial(node->args[1]);
    case NodeKind::sub: return to_polynomial(node->args[0]) - to_polynomial(node->args[1]);
    case NodeKind::mul: return to_polynomial(node->args[0]) * to_polynomial(node->args[1]);
    case NodeKind::div: {
        const Polynomial d = to_polynomial(node->args[1]);
        if (d.degree() != 0) {
            return fail("divides by a non-constant");
        }
        return to_polynomial(node->args[0]) * (1.0 / d.coefficient(0));
    }
    case NodeKind::pow: {
        const Polynomial e = to_polynomial(node->args[1]);
        const double ev = e.coefficient(0);
        if (e.degree() > 0 || ev < 0.0 || ev != std::floor(ev) || ev > 64.0) {
            return fail("uses a power that is not a small nonnegative integer");
        }
        const Polynomial base = to_polynomial(node->args[0]);
        Polynomial r = Polynomial::constant(1.0);
        for (int i = 0; i < static_cast<int>(ev); ++i) {
            r = r * base;
        }
        return r;
    }
    case NodeKind::call: return fail("calls a function");
    }
    return fail("is not polynomial");
}

inline Polynomial to_polynomial(const expr::Expr& e) { return to_polynomial(e.root_ptr()); }

namespace detail {

/// c such that the deviation equals t + c exactly as a polynomial.
inline double offset_of(const expr::Expr& deviation)
{
    Polynomial p;
    try {
        p = to_polynomial(deviation);
    } catch (const Error&) {
        throw Error(ErrorKind::nonconstant_delay, "deviation '" + deviation.to_string() + "' is not t + constant");
    }
    if (p.degree() != 1 || p.coefficient(1) != 1.0) {
        throw Error(ErrorKind::nonconstant_delay, "deviation '" + deviation.to_string() + "' is not t + constant");
    }
    return p.coefficient(0);
}

}  // namespace detail

/// tau > 0 for a deviation of the form t - tau.
inline double lag_of(const expr::Expr& deviation)
{
    const double c = detail::offset_of(deviation);
    if (!(c < 0.0)) {
        throw Error(ErrorKind::nonconstant_delay, "deviation '" + deviation.to_string() + "' is not a positive lag");
    }
    return -c;
}

/// c > 0 for a deviation of the form t + c.
inline double lead_of(const expr::Expr& deviation)
{
    const double c = detail::offset_of(deviation);
    if (!(c > 0.0)) {
        throw Error(ErrorKind::nonconstant_delay, "deviation '" + deviation.to_string() + "' is not a positive lead");
    }
    return c;
}

}  // namespace fdesolve::oracle
