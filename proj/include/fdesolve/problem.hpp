#pragma once

#include "fdesolve/error.hpp"
#include "fdesolve/funcspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fdesolve {

/// forward: retarded Cauchy problem marching right from t0.
/// backward: advanced co problem marching left from tau0.
enum class Direction { forward, backward };

constexpr Direction opposite(Direction d) noexcept
{
    return d == Direction::forward ? Direction::backward : Direction::forward;
}

using TimeFunction = std::function<double(double)>;

/// F_k(t, u) with u the n x N matrix of deviated values, row-major:
/// u[m * N + j] = x_m(deviation_{mj}(t)).
using RhsFunction = std::function<double(double, std::span<const double>)>;

/// A quasilinear system x_k'(t) = F_k(t, x_1(d_11(t)), ..., x_n(d_nN(t)))
/// with prescribed data on one side of the anchor time.
///
/// For Direction::forward the deviations are delays (d(t) <= t), the
/// prescribed data is the history on (-inf, t0] and `anchor` is t0.
/// For Direction::backward they are advances (d(t) >= t), the prescribed
/// data is terminal data on [tau0, +inf) and `anchor` is tau0.
///
/// `majorant[k]` is the Lipschitz coefficient f_k(t) >= 0:
///   |F_k(t,u) - F_k(t,v)| <= f_k(t) * sum_{m,j} |u_mj - v_mj|.
/// The solver never estimates it; window sizes and certificates rely on it.
template <Direction Dir>
struct DeviatingProblem {
    static constexpr Direction direction = Dir;

    std::size_t n_components = 0;
    std::size_t n_deviations = 0;
    std::vector<RhsFunction> rhs;
    std::vector<TimeFunction> deviation;   // index m * N + j
    std::vector<TimeFunction> majorant;
    std::vector<PiecewiseFunction> prescribed;
    double anchor = 0.0;

    std::size_t deviation_index(std::size_t m, std::size_t j) const noexcept { return m * n_deviations + j; }

    void check_shape() const
    {
        if (n_components == 0 || n_deviations == 0) {
            throw Error(ErrorKind::invalid_argument, "problem needs n >= 1 and N >= 1");
        }
        if (rhs.size() != n_components || majorant.size() != n_components ||
            prescribed.size() != n_components) {
            throw Error(ErrorKind::invalid_argument, "rhs, majorant and prescribed data need n entries");
        }
        if (deviation.size() != n_components * n_deviations) {
            throw Error(ErrorKind::invalid_argument, "deviations need n * N entries");
        }
    }
};

using RetardedIVP = DeviatingProblem<Direction::forward>;
using AdvancedTVP = DeviatingProblem<Direction::backward>;

/// Default sampling tolerance for the retardation / advance conditions.
inline constexpr double kDeviationTol = 1e-12;

struct Violation {
    std::size_t component = 0;   // 0-based
    std::size_t deviation = 0;   // 0-based
    double t = 0.0;
    double value = 0.0;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::size_t samples = 0;

    bool passed() const noexcept { return violations.empty(); }
};

class ValidationError : public Error {
public:
    ValidationError(ErrorKind kind, ValidationReport report)
        : Error(kind, summarize(report))
        , report_(std::move(report))
    {
    }

    const ValidationReport& report() const noexcept { return report_; }

private:
    static std::string summarize(const ValidationReport& r)
    {
        std::string msg = std::to_string(r.violations.size()) + " of " + std::to_string(r.samples) +
                          " sampled deviations on the wrong side of t";
        if (!r.violations.empty()) {
            const auto& v = r.violations.front();
            msg += "; first: component " + std::to_string(v.component + 1) + ", deviation " +
                   std::to_string(v.deviation + 1) + ", t = " + std::to_string(v.t) +
                   ", value = " + std::to_string(v.value);
        }
        return msg;
    }

    ValidationReport report_;
};

/// true when a deviation value is admissible for the direction: d <= t + tol
/// for delays, d >= t - tol for advances.
template <Direction Dir>
constexpr bool deviation_admissible(double t, double d, double tol) noexcept
{
    if constexpr (Dir == Direction::forward) {
        return d <= t + tol;
    } else {
        return d >= t - tol;
    }
}

namespace detail {

inline std::vector<double> validation_grid(double a, double b, const GridSpec& grid)
{
    grid.validate();
    const double len = b - a;
    const auto per_unit = static_cast<double>(grid.points_per_window);
    const auto points = static_cast<std::size_t>(
        std::clamp(std::ceil(len) * per_unit, per_unit, 1.0e6));
    return uniform_grid(a, b, std::max<std::size_t>(points, 2));
}

}  // namespace detail

/// Samples every deviation on a uniform grid over [a, b] and collects the
/// points that break the retardation (forward) or advance (backward)
/// condition. Throws ValidationError when any are found; also rejects
/// negative majorant samples.
template <Direction Dir>
ValidationReport validate_deviations(const DeviatingProblem<Dir>& p, double a, double b,
                                     const GridSpec& grid = {}, double tol = kDeviationTol)
{
    p.check_shape();
    if (!(a < b)) {
        throw Error(ErrorKind::invalid_argument, "validation span must be nonempty");
    }
    const auto ts = detail::validation_grid(a, b, grid);
    ValidationReport report;
    for (std::size_t m = 0; m < p.n_components; ++m) {
        for (std::size_t j = 0; j < p.n_deviations; ++j) {
            const auto& d = p.deviation[p.deviation_index(m, j)];
            for (double t : ts) {
                ++report.samples;
                const double v = d(t);
                if (!deviation_admissible<Dir>(t, v, tol)) {
                    report.violations.push_back(Violation{m, j, t, v});
                }
            }
        }
    }
    if (!report.passed()) {
        throw ValidationError(Dir == Direction::forward ? ErrorKind::retardation_violated
                                                        : ErrorKind::advance_violated,
                              std::move(report));
    }
    for (std::size_t k = 0; k < p.n_components; ++k) {
        for (double t : ts) {
            const double f = p.majorant[k](t);
            if (!(f >= 0.0)) {
                throw Error(ErrorKind::negative_majorant,
                            "majorant " + std::to_string(k + 1) + " is " + std::to_string(f) +
                                " at t = " + std::to_string(t));
            }
        }
    }
    return report;
}

inline ValidationReport validate_retardation(const RetardedIVP& p, double t0, double t_end,
                                             const GridSpec& grid = {}, double tol = kDeviationTol)
{
    return validate_deviations(p, t0, t_end, grid, tol);
}

inline ValidationReport validate_advance(const AdvancedTVP& p, double t_start, double tau0,
                                         const GridSpec& grid = {}, double tol = kDeviationTol)
{
    return validate_deviations(p, t_start, tau0, grid, tol);
}

/// x_k'(t) = sum_j sum_m a_kjm(t) x_j(d_jm(t)) + b_k(t).
template <Direction Dir>
struct LinearSystem {
    std::size_t n_components = 0;
    std::size_t n_deviations = 0;
    std::vector<TimeFunction> coefficient;   // index (k * n + j) * N + m
    std::vector<TimeFunction> forcing;       // n
    std::vector<TimeFunction> deviation;     // index j * N + m
    std::vector<PiecewiseFunction> prescribed;
    double anchor = 0.0;

    std::size_t coefficient_index(std::size_t k, std::size_t j, std::size_t m) const noexcept
    {
        return (k * n_components + j) * n_deviations + m;
    }
};

using LinearRetardedSystem = LinearSystem<Direction::forward>;
using LinearAdvancedSystem = LinearSystem<Direction::backward>;

/// Builds the general problem with F_k(t,u) = sum a_kjm(t) u_jm + b_k(t) and
/// majorant f_k(t) = max_{j,m} |a_kjm(t)|.
template <Direction Dir>
DeviatingProblem<Dir> to_general(const LinearSystem<Dir>& sys)
{
    const std::size_t n = sys.n_components;
    const std::size_t N = sys.n_deviations;
    if (sys.coefficient.size() != n * n * N || sys.forcing.size() != n ||
        sys.deviation.size() != n * N || sys.prescribed.size() != n) {
        throw Error(ErrorKind::invalid_argument, "linear system arrays do not match n and N");
    }
    DeviatingProblem<Dir> p;
    p.n_components = n;
    p.n_deviations = N;
    p.deviation = sys.deviation;
    p.prescribed = sys.prescribed;
    p.anchor = sys.anchor;
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<TimeFunction> row(sys.coefficient.begin() + static_cast<std::ptrdiff_t>(k * n * N),
                                      sys.coefficient.begin() + static_cast<std::ptrdiff_t>((k + 1) * n * N));
        TimeFunction b = sys.forcing[k];
        p.rhs.push_back([row, b](double t, std::span<const double> u) {
            double acc = b(t);
            for (std::size_t i = 0; i < row.size(); ++i) {
                acc += row[i](t) * u[i];
            }
            return acc;
        });
        p.majorant.push_back([row](double t) {
            double f = 0.0;
            for (const auto& a : row) {
                f = std::max(f, std::abs(a(t)));
            }
            return f;
        });
    }
    return p;
}

inline RetardedIVP linear_to_general(const LinearRetardedSystem& sys) { return to_general(sys); }

inline AdvancedTVP linear_to_general_advanced(const LinearAdvancedSystem& sys) { return to_general(sys); }

/// phi(t) -> phi(-t) applied to prescribed data.
inline PiecewiseFunction reflect(const PiecewiseFunction& f)
{
    std::optional<Tail> tail;
    if (f.tail()) {
        auto fn = f.tail()->fn;
        tail = Tail{[fn](double t) { return fn(-t); }, -f.tail()->hi, -f.tail()->lo};
    }
    if (!f.has_span()) {
        return tail ? PiecewiseFunction::from_tail(std::move(*tail)) : PiecewiseFunction{};
    }
    const auto bp = f.breakpoints();
    const auto ys = f.samples();
    const auto ms = f.slopes();
    std::vector<double> t(bp.rbegin(), bp.rend());
    std::vector<double> y(ys.rbegin(), ys.rend());
    std::vector<double> m;
    for (auto it = ms.rbegin(); it != ms.rend(); ++it) {
        m.push_back(-*it);
    }
    for (double& v : t) {
        v = -v;
    }
    return PiecewiseFunction(std::move(t), std::move(y), f.interp(), std::move(tail), std::move(m));
}

/// Time reversal t -> -t. If phi solves `p`, psi(t) = phi(-t) solves the
/// reflected problem: psi'(t) = -F(-t, psi(-d(-t))), deviations -d(-t),
/// majorants f(-t), anchor -anchor. Retarded and advanced problems map onto
/// each other.
template <Direction Dir>
DeviatingProblem<opposite(Dir)> reflect(const DeviatingProblem<Dir>& p)
{
    p.check_shape();
    DeviatingProblem<opposite(Dir)> r;
    r.n_components = p.n_components;
    r.n_deviations = p.n_deviations;
    r.anchor = -p.anchor;
    for (const auto& f : p.rhs) {
        r.rhs.push_back([f](double t, std::span<const double> u) { return -f(-t, u); });
    }
    for (const auto& d : p.deviation) {
        r.deviation.push_back([d](double t) { return -d(-t); });
    }
    for (const auto& h : p.majorant) {
        r.majorant.push_back([h](double t) { return h(-t); });
    }
    for (const auto& s : p.prescribed) {
        r.prescribed.push_back(reflect(s));
    }
    return r;
}

}  // namespace fdesolve
