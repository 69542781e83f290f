#pragma once

#include "fdesolve/error.hpp"
#include "fdesolve/funcspace.hpp"
#include "fdesolve/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fdesolve {

enum class InitialGuess {
    constant,               ///< junction value held constant over the window
    linear_extrapolation,   ///< junction value plus a backward-difference slope of the prescribed data
};

struct SolverConfig {
    /// Target contraction factor; every window satisfies q <= theta.
    double theta = 0.5;
    /// Sup-distance to the discrete fixed point certified per window.
    double tol = 1e-8;
    GridSpec grid{};
    /// Upper bound on window length (windows with zero Lipschitz mass hit it).
    double max_window = 1.0;
    /// Shortest window the sizing bisection may return before ZeroProgress.
    double min_window = 1e-9;
    Interp interp = Interp::cubic_hermite;
    Quadrature quadrature = Quadrature::cubic;
    InitialGuess initial_guess = InitialGuess::constant;
    /// Extra iterations allowed beyond the a-priori Banach estimate.
    std::size_t iteration_margin = 25;
    double deviation_tol = kDeviationTol;

    void validate() const
    {
        if (!(theta > 0.0 && theta < 1.0)) {
            throw Error(ErrorKind::invalid_argument, "theta must lie in (0, 1)");
        }
        if (!(tol > 0.0)) {
            throw Error(ErrorKind::invalid_argument, "tol must be positive");
        }
        if (!(max_window > 0.0) || !(min_window > 0.0) || min_window > max_window) {
            throw Error(ErrorKind::invalid_argument, "need 0 < min_window <= max_window");
        }
        grid.validate();
    }
};

/// Absolute slack when comparing a quadrature-computed q against theta;
/// absorbs summation roundoff so that exactly representable window lengths
/// are accepted.
inline constexpr double kContractionSlack = 1e-12;

/// Relative (to max_len) termination width of the window-length bisection.
inline constexpr double kWindowBisectionTol = 1e-12;

/// A contraction window [t_start, t_end] with q = N * sum_k int f_k.
struct Window {
    double t_start = 0.0;
    double t_end = 0.0;
    double q = 0.0;

    double length() const noexcept { return t_end - t_start; }
};

struct WindowRecord {
    Window window;
    std::size_t iterations = 0;
    /// rho(x_m, x_{m-1}) at the last iteration.
    double final_residual = 0.0;
    /// min(apriori_bound, posterior_bound): certified rho(x_m, x*).
    double error_bound = 0.0;
    /// q^m / (1 - q) * rho(x_1, x_0).
    double apriori_bound = 0.0;
    /// q / (1 - q) * rho(x_m, x_{m-1}).
    double posterior_bound = 0.0;
    /// Grid spacing inside the window.
    double step = 0.0;
};

struct SolveReport {
    std::vector<WindowRecord> windows;

    std::size_t total_windows() const noexcept { return windows.size(); }

    std::size_t total_iterations() const noexcept
    {
        std::size_t total = 0;
        for (const auto& w : windows) {
            total += w.iterations;
        }
        return total;
    }

    double max_error_bound() const noexcept
    {
        double b = 0.0;
        for (const auto& w : windows) {
            b = std::max(b, w.error_bound);
        }
        return b;
    }
};

/// Prescribed data plus every solved window, in marching order. Immutable;
/// append() returns an extended copy that shares the window storage.
template <Direction Dir>
class WindowChain {
public:
    WindowChain(std::vector<PiecewiseFunction> prescribed, double anchor)
        : prescribed_(std::make_shared<const std::vector<PiecewiseFunction>>(std::move(prescribed)))
        , anchor_(anchor)
        , frontier_(anchor)
    {
    }

    std::size_t components() const noexcept { return prescribed_->size(); }
    double anchor() const noexcept { return anchor_; }
    /// Far edge of the solved region (equals the anchor before any window).
    double frontier() const noexcept { return frontier_; }
    const std::vector<std::shared_ptr<const Trajectory>>& windows() const noexcept { return windows_; }
    const std::vector<PiecewiseFunction>& prescribed() const noexcept { return *prescribed_; }

    bool on_prescribed_side(double t) const noexcept
    {
        return Dir == Direction::forward ? t <= anchor_ : t >= anchor_;
    }

    bool defined_at(std::size_t k, double t) const
    {
        if (on_prescribed_side(t)) {
            return (*prescribed_)[k].defined_at(t);
        }
        return Dir == Direction::forward ? t <= frontier_ : t >= frontier_;
    }

    double value(std::size_t k, double t) const
    {
        if (on_prescribed_side(t)) {
            return (*prescribed_)[k](t);
        }
        return window_at(t).component(k)(t);
    }

    std::shared_ptr<const WindowChain> append(Trajectory w) const
    {
        auto next = std::make_shared<WindowChain>(*this);
        if constexpr (Dir == Direction::forward) {
            next->inner_.push_back(w.t_start());
            next->frontier_ = w.t_end();
        } else {
            next->inner_.push_back(w.t_end());
            next->frontier_ = w.t_start();
        }
        next->windows_.push_back(std::make_shared<const Trajectory>(std::move(w)));
        return next;
    }

    /// All window grid points in increasing time, junctions listed once.
    std::vector<double> grid() const
    {
        std::vector<double> out;
        auto add = [&](const Trajectory& w) {
            const auto g = w.grid();
            const std::size_t skip = out.empty() ? 0 : 1;
            out.insert(out.end(), g.begin() + static_cast<std::ptrdiff_t>(skip), g.end());
        };
        if constexpr (Dir == Direction::forward) {
            for (const auto& w : windows_) add(*w);
        } else {
            for (auto it = windows_.rbegin(); it != windows_.rend(); ++it) add(**it);
        }
        return out;
    }

private:
    const Trajectory& window_at(double t) const
    {
        const bool beyond = Dir == Direction::forward ? t > frontier_ : t < frontier_;
        if (windows_.empty() || beyond) {
            throw Error(ErrorKind::no_tail_defined,
                        "t = " + std::to_string(t) + " lies beyond the solved region");
        }
        std::size_t idx;
        if constexpr (Dir == Direction::forward) {
            // inner_ holds increasing window starts
            const auto it = std::upper_bound(inner_.begin(), inner_.end(), t);
            idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - inner_.begin() - 1, 0));
        } else {
            // inner_ holds decreasing window ends
            const auto it = std::partition_point(inner_.begin(), inner_.end(), [t](double e) { return e >= t; });
            idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - inner_.begin() - 1, 0));
        }
        return *windows_[idx];
    }

    std::shared_ptr<const std::vector<PiecewiseFunction>> prescribed_;
    double anchor_;
    double frontier_;
    std::vector<std::shared_ptr<const Trajectory>> windows_;
    std::vector<double> inner_;
};

template <Direction Dir>
class Solution {
public:
    Solution(std::shared_ptr<const WindowChain<Dir>> path, SolveReport report)
        : path_(std::move(path))
        , report_(std::move(report))
    {
    }

    double operator()(std::size_t k, double t) const { return path_->value(k, t); }
    double value(std::size_t k, double t) const { return path_->value(k, t); }

    std::size_t components() const noexcept { return path_->components(); }
    std::vector<double> grid() const { return path_->grid(); }

    /// Solved span in increasing time.
    double t_begin() const noexcept { return Dir == Direction::forward ? path_->anchor() : path_->frontier(); }
    double t_end() const noexcept { return Dir == Direction::forward ? path_->frontier() : path_->anchor(); }

    const WindowChain<Dir>& path() const noexcept { return *path_; }
    const std::shared_ptr<const WindowChain<Dir>>& path_ptr() const noexcept { return path_; }
    const SolveReport& report() const noexcept { return report_; }

private:
    std::shared_ptr<const WindowChain<Dir>> path_;
    SolveReport report_;
};

using RetardedSolution = Solution<Direction::forward>;
using AdvancedSolution = Solution<Direction::backward>;

/// Prescribed data for the next window: the chain evaluated on the side of
/// its frontier that is already known.
template <Direction Dir>
std::vector<Tail> window_tails(const std::shared_ptr<const WindowChain<Dir>>& chain)
{
    std::vector<Tail> tails;
    const double junction = chain->frontier();
    for (std::size_t k = 0; k < chain->components(); ++k) {
        auto fn = [chain, k](double t) { return chain->value(k, t); };
        if constexpr (Dir == Direction::forward) {
            tails.push_back(Tail{fn, -kInfinity, junction});
        } else {
            tails.push_back(Tail{fn, junction, kInfinity});
        }
    }
    return tails;
}

/// N * sum_k int_a^b f_k, by the configured quadrature on a uniform grid.
template <Direction Dir>
double lipschitz_mass(const DeviatingProblem<Dir>& p, double a, double b, const SolverConfig& cfg = {})
{
    if (!(b > a)) {
        return 0.0;
    }
    const auto grid = uniform_grid(a, b, cfg.grid.points_per_window);
    std::vector<double> f(grid.size());
    double total = 0.0;
    for (std::size_t k = 0; k < p.n_components; ++k) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            f[i] = p.majorant[k](grid[i]);
            if (!(f[i] >= 0.0)) {
                throw Error(ErrorKind::negative_majorant, "majorant " + std::to_string(k + 1) + " is " +
                                                              std::to_string(f[i]) + " at t = " +
                                                              std::to_string(grid[i]));
            }
        }
        total += running_integral(grid, f, cfg.quadrature).back();
    }
    return static_cast<double>(p.n_deviations) * total;
}

/// Largest window adjacent to `from` (to its right when marching forward,
/// to its left when marching backward) whose Lipschitz mass stays within
/// theta, capped at max_len. The mass is monotone in the window length, so
/// bisection on the length is exact up to its termination width.
template <Direction Dir>
Window choose_window(const DeviatingProblem<Dir>& p, double from, double theta, double max_len,
                     const SolverConfig& cfg = {})
{
    if (!(theta > 0.0 && theta < 1.0)) {
        throw Error(ErrorKind::invalid_argument, "theta must lie in (0, 1)");
    }
    if (!(max_len > 0.0)) {
        throw Error(ErrorKind::invalid_argument, "max_len must be positive");
    }
    auto make = [&](double len) {
        Window w = Dir == Direction::forward ? Window{from, from + len, 0.0} : Window{from - len, from, 0.0};
        w.q = lipschitz_mass(p, w.t_start, w.t_end, cfg);
        return w;
    };
    const double budget = theta + kContractionSlack;
    const Window widest = make(max_len);
    if (widest.q <= budget) {
        return widest;
    }
    const double min_len = std::min(cfg.min_window, max_len);
    const Window narrowest = make(min_len);
    if (narrowest.q > budget) {
        const double suggested = min_len * theta / narrowest.q;
        throw Error(ErrorKind::zero_progress,
                    "Lipschitz mass " + std::to_string(narrowest.q) + " over the minimal window length " +
                        std::to_string(min_len) + " exceeds theta; a window of about " +
                        std::to_string(suggested) + " (smaller min_window / grid step) would be needed");
    }
    double lo = 0.0;
    double hi = max_len;
    while (hi - lo > kWindowBisectionTol * max_len) {
        const double mid = 0.5 * (lo + hi);
        if (make(mid).q <= budget) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return make(std::max(lo, min_len));
}

template <Direction Dir>
Window choose_window(const DeviatingProblem<Dir>& p, double from, const SolverConfig& cfg)
{
    return choose_window(p, from, cfg.theta, cfg.max_window, cfg);
}

namespace detail {

/// Deviated arguments d_mj(t_i) for every grid point, row-major in i. Values
/// within the sampling tolerance on the wrong side are clamped onto t_i.
template <Direction Dir>
std::vector<double> deviation_table(const DeviatingProblem<Dir>& p, std::span<const double> grid, double tol)
{
    const std::size_t stride = p.n_components * p.n_deviations;
    std::vector<double> table(grid.size() * stride);
    ValidationReport report;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t m = 0; m < p.n_components; ++m) {
            for (std::size_t j = 0; j < p.n_deviations; ++j) {
                const std::size_t mj = p.deviation_index(m, j);
                const double t = grid[i];
                double d = p.deviation[mj](t);
                ++report.samples;
                if (!deviation_admissible<Dir>(t, d, tol)) {
                    report.violations.push_back(Violation{m, j, t, d});
                }
                d = Dir == Direction::forward ? std::min(d, t) : std::max(d, t);
                table[i * stride + mj] = d;
            }
        }
    }
    if (!report.passed()) {
        throw ValidationError(Dir == Direction::forward ? ErrorKind::retardation_violated
                                                        : ErrorKind::advance_violated,
                              std::move(report));
    }
    return table;
}

template <Direction Dir>
void check_tail_coverage(const DeviatingProblem<Dir>& p, const WindowChain<Dir>& chain,
                         std::span<const double> table)
{
    const std::size_t stride = p.n_components * p.n_deviations;
    for (std::size_t idx = 0; idx < table.size(); ++idx) {
        const std::size_t m = (idx % stride) / p.n_deviations;
        const double d = table[idx];
        if (chain.on_prescribed_side(d) && !chain.defined_at(m, d)) {
            throw Error(ErrorKind::tail_gap, "prescribed data for component " + std::to_string(m + 1) +
                                                 " is undefined at deviated time " + std::to_string(d));
        }
    }
}

/// One application of the integral operator on the grid of `x`:
///   forward:  (I x)_k(t) = psi_k(t1) + int_{t1}^{t} F_k(tau, x(d(tau))) dtau
///   backward: (J x)_k(t) = chi_k(t2) - int_{t}^{t2} G_k(tau, x(d(tau))) dtau
/// Both outputs have derivative F_k (resp. G_k) at the grid points, which
/// become the Hermite slopes.
template <Direction Dir>
Trajectory apply_on_grid(const DeviatingProblem<Dir>& p, const Trajectory& x,
                         std::span<const double> table, const SolverConfig& cfg)
{
    const auto grid = x.grid();
    const std::size_t P = grid.size();
    const std::size_t n = p.n_components;
    const std::size_t stride = n * p.n_deviations;
    const double junction = Dir == Direction::forward ? grid.front() : grid.back();

    std::vector<std::vector<double>> integrand(n, std::vector<double>(P));
    std::vector<double> u(stride);
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t mj = 0; mj < stride; ++mj) {
            const std::size_t m = mj / p.n_deviations;
            const double d = table[i * stride + mj];
            try {
                u[mj] = x.component(m)(d);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::no_tail_defined) {
                    throw;
                }
                throw Error(ErrorKind::tail_gap, "deviated query at t = " + std::to_string(d) +
                                                     " precedes the prescribed data: " + e.message());
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            integrand[k][i] = p.rhs[k](grid[i], u);
        }
    }

    std::vector<PiecewiseFunction> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& tail = x.component(k).tail();
        if (!tail) {
            throw Error(ErrorKind::invalid_argument, "trajectory component lacks prescribed data");
        }
        const double anchor_value = tail->fn(junction);
        const auto acc = running_integral(grid, integrand[k], cfg.quadrature);
        std::vector<double> v(P);
        for (std::size_t i = 0; i < P; ++i) {
            v[i] = Dir == Direction::forward ? anchor_value + acc[i] : anchor_value - (acc[P - 1] - acc[i]);
        }
        std::vector<double> slopes;
        if (cfg.interp == Interp::cubic_hermite) {
            slopes = std::move(integrand[k]);
        }
        out.emplace_back(std::vector<double>(grid.begin(), grid.end()), std::move(v), cfg.interp, tail,
                         std::move(slopes));
    }
    return Trajectory(std::move(out));
}

template <Direction Dir>
void check_window_grid(const Trajectory& x, const Window& w)
{
    if (x.t_start() != w.t_start || x.t_end() != w.t_end) {
        throw Error(ErrorKind::grid_mismatch, "trajectory span differs from the window");
    }
}

}  // namespace detail

/// The integral operator I (forward) or J (backward) on the window's space.
/// `x` must carry the prescribed data as its tails.
template <Direction Dir>
Trajectory apply_operator(const DeviatingProblem<Dir>& p, const Trajectory& x, const Window& w,
                          const SolverConfig& cfg = {})
{
    p.check_shape();
    detail::check_window_grid<Dir>(x, w);
    const auto table = detail::deviation_table(p, x.grid(), cfg.deviation_tol);
    return detail::apply_on_grid(p, x, table, cfg);
}

/// Initial Picard iterate on `grid`, anchored at the chain's frontier.
template <Direction Dir>
Trajectory initial_iterate(const std::shared_ptr<const WindowChain<Dir>>& chain, std::span<const double> grid,
                           const SolverConfig& cfg, InitialGuess guess)
{
    const auto tails = window_tails(chain);
    const double junction = chain->frontier();
    const double delta = grid[1] - grid[0];
    std::vector<PiecewiseFunction> comps;
    for (std::size_t k = 0; k < chain->components(); ++k) {
        const double psi = chain->value(k, junction);
        double slope = 0.0;
        if (guess == InitialGuess::linear_extrapolation) {
            const double behind = Dir == Direction::forward ? junction - delta : junction + delta;
            if (chain->defined_at(k, behind)) {
                const double back = chain->value(k, behind);
                slope = Dir == Direction::forward ? (psi - back) / delta : (back - psi) / delta;
            }
        }
        std::vector<double> y(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            y[i] = psi + slope * (grid[i] - junction);
        }
        if (Dir == Direction::forward) {
            y.front() = psi;
        } else {
            y.back() = psi;
        }
        std::vector<double> slopes;
        if (cfg.interp == Interp::cubic_hermite) {
            slopes.assign(grid.size(), slope);
        }
        comps.emplace_back(std::vector<double>(grid.begin(), grid.end()), std::move(y), cfg.interp, tails[k],
                           std::move(slopes));
    }
    return Trajectory(std::move(comps));
}

struct WindowSolution {
    Trajectory x;
    std::size_t iterations = 0;
    double error_bound = 0.0;
    double final_residual = 0.0;
    double apriori_bound = 0.0;
    double posterior_bound = 0.0;
};

namespace detail {

template <Direction Dir>
WindowSolution iterate_window(const DeviatingProblem<Dir>& p, const Window& w, const Trajectory& init,
                              std::span<const double> table, const SolverConfig& cfg)
{
    const double q = w.q;
    if (!(q < 1.0)) {
        throw Error(ErrorKind::invalid_argument, "window contraction factor must be below 1");
    }
    Trajectory next = apply_on_grid(p, init, table, cfg);
    const double first = distance(next, init);
    if (q == 0.0 || first == 0.0) {
        return WindowSolution{std::move(next), 1, 0.0, first, 0.0, 0.0};
    }
    const double stop = cfg.tol * (1.0 - q) / q;
    std::size_t limit = 1 + cfg.iteration_margin;
    if (first > stop) {
        limit = static_cast<std::size_t>(std::ceil(std::log(stop / first) / std::log(q))) + cfg.iteration_margin;
    }
    std::size_t m = 1;
    double last = first;
    while (last > stop) {
        if (m >= limit) {
            throw Error(ErrorKind::no_convergence,
                        "successive distance " + std::to_string(last) + " still above " + std::to_string(stop) +
                            " after " + std::to_string(m) +
                            " iterations; the Lipschitz majorant is probably too small");
        }
        Trajectory after = apply_on_grid(p, next, table, cfg);
        last = distance(after, next);
        next = std::move(after);
        ++m;
    }
    const double apriori = std::pow(q, static_cast<double>(m)) / (1.0 - q) * first;
    const double posterior = q / (1.0 - q) * last;
    return WindowSolution{std::move(next), m, std::min(apriori, posterior), last, apriori, posterior};
}

}  // namespace detail

/// Successive approximation x_{m+1} = I x_m on one window until
/// rho(x_{m+1}, x_m) <= tol (1 - q) / q, which certifies
/// rho(x_m, x*) <= q / (1 - q) rho(x_m, x_{m-1}) <= tol.
template <Direction Dir>
WindowSolution solve_window(const DeviatingProblem<Dir>& p, const Window& w, const Trajectory& init,
                            const SolverConfig& cfg = {})
{
    p.check_shape();
    detail::check_window_grid<Dir>(init, w);
    const auto table = detail::deviation_table(p, init.grid(), cfg.deviation_tol);
    return detail::iterate_window(p, w, init, table, cfg);
}

namespace detail {

/// Trims a sized window so the march ends exactly on the target and never
/// leaves a sliver behind.
template <Direction Dir>
Window fit_to_target(const DeviatingProblem<Dir>& p, Window w, double from, double target, const SolverConfig& cfg)
{
    const double remaining = std::abs(target - from);
    double len = w.length();
    if (len < remaining) {
        const double gap = remaining - len;
        if (gap <= 1e-12 * std::max(1.0, std::abs(target))) {
            len = remaining;
        } else if (gap < 1e-6 * len) {
            len = 0.5 * remaining;
        } else {
            return w;
        }
    }
    if (len >= remaining) {
        w = Dir == Direction::forward ? Window{from, target, 0.0} : Window{target, from, 0.0};
    } else {
        w = Dir == Direction::forward ? Window{from, from + len, 0.0} : Window{from - len, from, 0.0};
    }
    w.q = lipschitz_mass(p, w.t_start, w.t_end, cfg);
    return w;
}

template <Direction Dir>
Solution<Dir> march(const DeviatingProblem<Dir>& p, std::shared_ptr<const WindowChain<Dir>> chain,
                    SolveReport report, double target, const SolverConfig& cfg)
{
    auto ahead = [&](double frontier) {
        return Dir == Direction::forward ? frontier < target : frontier > target;
    };
    while (ahead(chain->frontier())) {
        const double from = chain->frontier();
        const double remaining = std::abs(target - from);
        Window w{from, from, 0.0};
        try {
            w = choose_window(p, from, cfg.theta, std::min(cfg.max_window, remaining), cfg);
            w = fit_to_target(p, w, from, target, cfg);
            const auto grid = uniform_grid(w.t_start, w.t_end, cfg.grid.points_per_window);
            const auto table = deviation_table(p, grid, cfg.deviation_tol);
            check_tail_coverage(p, *chain, table);
            const Trajectory init = initial_iterate(chain, grid, cfg, cfg.initial_guess);
            WindowSolution ws = iterate_window(p, w, init, table, cfg);
            WindowRecord rec;
            rec.window = w;
            rec.iterations = ws.iterations;
            rec.final_residual = ws.final_residual;
            rec.error_bound = ws.error_bound;
            rec.apriori_bound = ws.apriori_bound;
            rec.posterior_bound = ws.posterior_bound;
            rec.step = grid[1] - grid[0];
            report.windows.push_back(rec);
            chain = chain->append(std::move(ws.x));
        } catch (Error& e) {
            if (!e.window()) {
                e.set_window(w.t_start, w.t_end);
            }
            throw;
        }
    }
    return Solution<Dir>(std::move(chain), std::move(report));
}

}  // namespace detail

/// Continuation to `target`: windows are sized, solved, and chained, each
/// fixed point becoming prescribed data for the next window.
template <Direction Dir>
Solution<Dir> solve_to(const DeviatingProblem<Dir>& p, double target, const SolverConfig& cfg = {})
{
    p.check_shape();
    cfg.validate();
    const bool ordered = Dir == Direction::forward ? target > p.anchor : target < p.anchor;
    if (!ordered) {
        throw Error(ErrorKind::invalid_argument, Dir == Direction::forward
                                                     ? "t_end must exceed t0"
                                                     : "t_start must precede tau0");
    }
    const double lo = std::min(target, p.anchor);
    const double hi = std::max(target, p.anchor);
    validate_deviations(p, lo, hi, cfg.grid, cfg.deviation_tol);
    auto chain = std::make_shared<const WindowChain<Dir>>(p.prescribed, p.anchor);
    return detail::march(p, std::move(chain), SolveReport{}, target, cfg);
}

inline RetardedSolution solve(const RetardedIVP& p, double t_end, const SolverConfig& cfg = {})
{
    return solve_to(p, t_end, cfg);
}

inline AdvancedSolution solve_advanced(const AdvancedTVP& p, double t_start, const SolverConfig& cfg = {})
{
    return solve_to(p, t_start, cfg);
}

/// Resumes a previous solution and continues it to a farther target.
template <Direction Dir>
Solution<Dir> extend(const DeviatingProblem<Dir>& p, const Solution<Dir>& previous, double target,
                     const SolverConfig& cfg = {})
{
    p.check_shape();
    cfg.validate();
    const double frontier = previous.path().frontier();
    const bool ordered = Dir == Direction::forward ? target > frontier : target < frontier;
    if (!ordered) {
        return previous;
    }
    validate_deviations(p, std::min(target, frontier), std::max(target, frontier), cfg.grid, cfg.deviation_tol);
    return detail::march(p, previous.path_ptr(), previous.report(), target, cfg);
}

/// Integrated-form residual per component:
///   forward:  max_t |phi_k(t) - r_k(t0) - int_{t0}^{t} F_k(tau, phi(d(tau))) dtau|
///   backward: max_t |phi_k(t) - s_k(tau0) + int_{t}^{tau0} G_k(tau, phi(d(tau))) dtau|
/// over the solution's grid points. The integral is recomputed on each
/// window's grid refined `refine` times.
template <Direction Dir>
std::vector<double> residual(const DeviatingProblem<Dir>& p, const Solution<Dir>& sol, std::size_t refine = 1,
                             Quadrature rule = Quadrature::cubic)
{
    p.check_shape();
    refine = std::max<std::size_t>(refine, 1);
    const std::size_t n = p.n_components;
    const std::size_t stride = n * p.n_deviations;
    std::vector<double> worst(n, 0.0);
    std::vector<double> carried(n, 0.0);
    std::vector<double> anchor_value(n);
    for (std::size_t k = 0; k < n; ++k) {
        anchor_value[k] = p.prescribed[k](p.anchor);
    }
    std::vector<double> u(stride);
    for (const auto& window : sol.path().windows()) {
        const auto coarse = window->grid();
        std::vector<double> fine;
        for (std::size_t i = 0; i + 1 < coarse.size(); ++i) {
            for (std::size_t r = 0; r < refine; ++r) {
                fine.push_back(coarse[i] + (coarse[i + 1] - coarse[i]) * static_cast<double>(r) /
                                               static_cast<double>(refine));
            }
        }
        fine.push_back(coarse.back());
        std::vector<std::vector<double>> g(n, std::vector<double>(fine.size()));
        for (std::size_t i = 0; i < fine.size(); ++i) {
            const double t = fine[i];
            for (std::size_t mj = 0; mj < stride; ++mj) {
                double d = p.deviation[mj](t);
                d = Dir == Direction::forward ? std::min(d, t) : std::max(d, t);
                u[mj] = sol(mj / p.n_deviations, d);
            }
            for (std::size_t k = 0; k < n; ++k) {
                g[k][i] = p.rhs[k](t, u);
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            const auto acc = running_integral(fine, g[k], rule);
            const double total = acc.back();
            for (std::size_t i = 0; i < coarse.size(); ++i) {
                const std::size_t fi = i * refine;
                const double t = coarse[i];
                double r;
                if constexpr (Dir == Direction::forward) {
                    r = sol(k, t) - anchor_value[k] - (carried[k] + acc[fi]);
                } else {
                    r = sol(k, t) - anchor_value[k] + (carried[k] + (total - acc[fi]));
                }
                worst[k] = std::max(worst[k], std::abs(r));
            }
            carried[k] += total;
        }
    }
    return worst;
}

}  // namespace fdesolve
