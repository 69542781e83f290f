#include "fdesolve/picard.hpp"

#include "fixtures.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

using namespace fdesolve;
using Catch::Matchers::WithinAbs;

namespace {

template <typename F>
ErrorKind kind_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::invalid_argument;
}

RetardedIVP constant_rhs(double value, double history)
{
    RetardedIVP p = fixtures::scalar_problem(0.0, [](double t) { return t - 1.0; }, history);
    p.rhs = {[value](double, std::span<const double>) { return value; }};
    return p;
}

/// First-window setup: chain, window, grid.
template <Direction Dir>
struct FirstWindow {
    std::shared_ptr<const WindowChain<Dir>> chain;
    Window window;
    std::vector<double> grid;
};

template <Direction Dir>
FirstWindow<Dir> first_window(const DeviatingProblem<Dir>& p, const SolverConfig& cfg)
{
    FirstWindow<Dir> fw;
    fw.chain = std::make_shared<const WindowChain<Dir>>(p.prescribed, p.anchor);
    fw.window = choose_window(p, p.anchor, cfg);
    fw.grid = uniform_grid(fw.window.t_start, fw.window.t_end, cfg.grid.points_per_window);
    return fw;
}

}  // namespace

TEST_CASE("window sizing", "[picard][window]")
{
    const SolverConfig cfg;
    SECTION("unit majorant: q equals the length")
    {
        const auto w = choose_window(fixtures::unit_delay(), 0.0, 0.5, 10.0, cfg);
        CHECK(w.t_start == 0.0);
        CHECK_THAT(w.t_end, WithinAbs(0.5, 1e-9));
        CHECK_THAT(w.q, WithinAbs(0.5, 1e-9));
        CHECK(w.q <= 0.5 + kContractionSlack);
    }
    SECTION("two components halve the window")
    {
        RetardedIVP p = fixtures::unit_delay();
        p.n_components = 2;
        p.rhs.push_back(p.rhs[0]);
        p.majorant.push_back(p.majorant[0]);
        p.prescribed.push_back(p.prescribed[0]);
        p.deviation.push_back(p.deviation[0]);
        const auto w = choose_window(p, 0.0, 0.5, 10.0, cfg);
        CHECK_THAT(w.t_end, WithinAbs(0.25, 1e-9));
    }
    SECTION("zero majorant hits the cap")
    {
        const auto w = choose_window(constant_rhs(1.0, 0.0), 0.0, 0.5, 10.0, cfg);
        CHECK(w.t_end == 10.0);
        CHECK(w.q == 0.0);
    }
    SECTION("time-varying majorant")
    {
        auto p = fixtures::unit_delay();
        p.majorant = {[](double t) { return 2.0 * t; }};
        // q = t_end^2 for a window starting at 0
        const auto w = choose_window(p, 0.0, 0.25, 10.0, cfg);
        CHECK_THAT(w.t_end, WithinAbs(0.5, 1e-9));
    }
    SECTION("backward windows extend to the left")
    {
        const auto w = choose_window(fixtures::unit_advance(), 0.0, 0.5, 10.0, cfg);
        CHECK(w.t_end == 0.0);
        CHECK_THAT(w.t_start, WithinAbs(-0.5, 1e-9));
    }
    SECTION("enormous majorant means zero progress")
    {
        auto p = fixtures::unit_delay();
        p.majorant = {[](double) { return 1e12; }};
        CHECK(kind_of([&] { choose_window(p, 0.0, 0.5, 1.0, cfg); }) == ErrorKind::zero_progress);
    }
    SECTION("arguments are checked")
    {
        CHECK(kind_of([&] { choose_window(fixtures::unit_delay(), 0.0, 1.0, 1.0, cfg); }) ==
              ErrorKind::invalid_argument);
        CHECK(kind_of([&] { choose_window(fixtures::unit_delay(), 0.0, 0.5, 0.0, cfg); }) ==
              ErrorKind::invalid_argument);
    }
}

TEST_CASE("window length is monotone in theta", "[picard][window][property]")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    auto p = fixtures::unit_delay();
    p.majorant = {[](double t) { return 1.0 + std::sin(5.0 * t) * std::sin(5.0 * t); }};
    for (int i = 0; i < 50; ++i) {
        double a = u(rng);
        double b = u(rng);
        if (a > b) std::swap(a, b);
        const auto wa = choose_window(p, 0.3, a, 2.0);
        const auto wb = choose_window(p, 0.3, b, 2.0);
        CHECK(wa.t_end <= wb.t_end);
        CHECK(wa.q <= a + kContractionSlack);
        CHECK(wb.q <= b + kContractionSlack);
    }
}

TEST_CASE("operator examples", "[picard][operator]")
{
    SolverConfig cfg;
    SECTION("zero right-hand side gives the junction constant")
    {
        const auto p = constant_rhs(0.0, 2.5);
        auto fw = first_window(p, cfg);
        const auto x = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        const auto y = apply_operator(p, x, fw.window, cfg);
        for (double t : fw.grid) CHECK(y(0, t) == 2.5);
    }
    SECTION("unit right-hand side integrates to t")
    {
        const auto p = constant_rhs(1.0, 0.0);
        const Window w{0.0, 1.0, 0.0};
        auto chain = std::make_shared<const WindowChain<Direction::forward>>(p.prescribed, 0.0);
        const auto grid = uniform_grid(0.0, 1.0, 33);
        const auto x = initial_iterate(chain, grid, cfg, InitialGuess::constant);
        const auto y = apply_operator(p, x, w, cfg);
        for (double t = 0.0; t <= 1.0; t += 0.01) CHECK_THAT(y(0, t), WithinAbs(t, 1e-14));
    }
    SECTION("unit delay from constant history gives 1 + t")
    {
        const auto p = fixtures::unit_delay();
        const Window w{0.0, 0.5, 0.5};
        auto chain = std::make_shared<const WindowChain<Direction::forward>>(p.prescribed, 0.0);
        const auto grid = uniform_grid(0.0, 0.5, 256);
        const auto x = initial_iterate(chain, grid, cfg, InitialGuess::constant);
        const auto y = apply_operator(p, x, w, cfg);
        CHECK(y(0, 0.0) == 1.0);
        // independent check by trapezoid quadrature of the history
        for (double t = 0.0; t <= 0.5; t += 0.0625) {
            const auto g = uniform_grid(0.0, std::max(t, 1e-3), 101);
            std::vector<double> r(g.size(), 1.0);
            const double quad = t == 0.0 ? 0.0 : integrate(g, r, 0.0, t);
            CHECK_THAT(y(0, t), WithinAbs(1.0 + quad, 1e-13));
        }
    }
    SECTION("the output keeps the prescribed tail")
    {
        const auto p = fixtures::unit_delay();
        auto fw = first_window(p, cfg);
        const auto x = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        const auto y = apply_operator(p, x, fw.window, cfg);
        CHECK(y(0, -3.0) == 1.0);
        CHECK(y.component(0).tail()->hi == 0.0);
    }
    SECTION("mismatched window is rejected")
    {
        const auto p = fixtures::unit_delay();
        auto fw = first_window(p, cfg);
        const auto x = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        CHECK(kind_of([&] { apply_operator(p, x, Window{0.0, 0.25, 0.25}, cfg); }) == ErrorKind::grid_mismatch);
    }
}

TEST_CASE("a delayed query before the history domain is a tail gap", "[picard][operator]")
{
    auto p = fixtures::unit_delay();
    p.prescribed = {PiecewiseFunction::from_tail(Tail{[](double) { return 1.0; }, -0.5, 0.0})};
    CHECK(kind_of([&] { solve(p, 1.0); }) == ErrorKind::tail_gap);
    try {
        solve(p, 1.0);
    } catch (const Error& e) {
        REQUIRE(e.window());
        CHECK(e.window()->first == 0.0);
    }
}

TEST_CASE("window iteration examples", "[picard][iteration]")
{
    SolverConfig cfg;
    SECTION("zero right-hand side converges after one application")
    {
        const auto p = constant_rhs(0.0, 4.0);
        auto fw = first_window(p, cfg);
        const auto x = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        const auto ws = solve_window(p, fw.window, x, cfg);
        CHECK(ws.iterations == 1);
        CHECK(ws.error_bound == 0.0);
        for (double t : fw.grid) CHECK(ws.x(0, t) == 4.0);
    }
    SECTION("unit delay: second iterate already exact")
    {
        const auto p = fixtures::unit_delay();
        auto fw = first_window(p, cfg);
        const auto x = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        const auto ws = solve_window(p, fw.window, x, cfg);
        CHECK(ws.iterations == 2);
        CHECK(ws.final_residual == 0.0);
        for (double t : fw.grid) CHECK_THAT(ws.x(0, t), WithinAbs(1.0 + t, 1e-14));
    }
    SECTION("ODE reduction: Picard iterates approach exp")
    {
        const auto p = fixtures::exponential();
        auto fw = first_window(p, cfg);
        CHECK_THAT(fw.window.t_end, WithinAbs(0.5, 1e-9));
        const auto x0 = initial_iterate(fw.chain, fw.grid, cfg, InitialGuess::constant);
        // the first iterates are the Taylor polynomials of exp
        const auto x1 = apply_operator(p, x0, fw.window, cfg);
        const auto x2 = apply_operator(p, x1, fw.window, cfg);
        for (double t : fw.grid) {
            CHECK_THAT(x1(0, t), WithinAbs(1.0 + t, 1e-13));
            CHECK_THAT(x2(0, t), WithinAbs(1.0 + t + 0.5 * t * t, 1e-13));
        }
        const auto ws = solve_window(p, fw.window, x0, cfg);
        CHECK(ws.error_bound <= cfg.tol);
        double worst = 0.0;
        for (double t : fw.grid) worst = std::max(worst, std::abs(ws.x(0, t) - std::exp(t)));
        CHECK(worst <= cfg.tol + 1e-2 * std::pow(fw.grid[1] - fw.grid[0], 2));
    }
}

TEST_CASE("an understated majorant ends in NoConvergence", "[picard][iteration]")
{
    auto p = fixtures::scalar_problem(50.0, [](double t) { return t; });
    p.majorant = {[](double) { return 1.0; }};
    CHECK(kind_of([&] { solve(p, 1.0); }) == ErrorKind::no_convergence);
}

TEST_CASE("solve examples", "[picard][solve]")
{
    SECTION("zero right-hand side keeps the history constant")
    {
        const auto sol = solve(constant_rhs(0.0, -1.25), 7.0);
        for (double t : sol.grid()) CHECK(sol(0, t) == -1.25);
    }
    SECTION("unit delay")
    {
        const auto sol = solve(fixtures::unit_delay(), 2.0);
        CHECK_THAT(sol(0, 1.0), WithinAbs(2.0, 1e-12));
        CHECK_THAT(sol(0, 2.0), WithinAbs(3.5, 1e-12));
        CHECK(sol.t_begin() == 0.0);
        CHECK(sol.t_end() == 2.0);
        CHECK(sol(0, -5.0) == 1.0);
        CHECK(sol.report().total_windows() == 4);
    }
    SECTION("pantograph")
    {
        const auto sol = solve(fixtures::pantograph(), 1.0);
        const auto ref = oracle::pantograph_series(1.0, 0.5, 30, 1.0);
        CHECK_THAT(sol(0, 1.0), WithinAbs(ref.value, 1e-8));
    }
    SECTION("time-varying majorant with two components")
    {
        // x1' = t x2(t - 0.5), x2' = -t x1(t - 0.5)
        RetardedIVP p;
        p.n_components = 2;
        p.n_deviations = 1;
        p.rhs = {[](double t, std::span<const double> u) { return t * u[1]; },
                 [](double t, std::span<const double> u) { return -t * u[0]; }};
        p.deviation = {[](double t) { return t - 0.5; }, [](double t) { return t - 0.5; }};
        p.majorant = {[](double t) { return std::abs(t); }, [](double t) { return std::abs(t); }};
        p.prescribed = {fixtures::constant_history(1.0, 0.0), fixtures::constant_history(0.0, 0.0)};
        const auto sol = solve(p, 3.0);
        oracle::PolynomialDelaySystem sys;
        using oracle::Polynomial;
        sys.n = 2;
        sys.N = 1;
        sys.coefficient = {Polynomial{}, Polynomial::identity(), -Polynomial::identity(), Polynomial{}};
        sys.forcing = {Polynomial{}, Polynomial{}};
        sys.lag = {0.5, 0.5};
        sys.history = {Polynomial::constant(1.0), Polynomial{}};
        const auto ref = oracle::method_of_steps(sys, 3.0);
        double worst = 0.0;
        for (double t : sol.grid())
            for (std::size_t k = 0; k < 2; ++k) worst = std::max(worst, std::abs(sol(k, t) - ref(k, t)));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("solve preconditions", "[picard][solve]")
{
    CHECK(kind_of([] { solve(fixtures::unit_delay(), 0.0); }) == ErrorKind::invalid_argument);
    auto p = fixtures::scalar_problem(1.0, [](double t) { return t + 0.1; });
    CHECK(kind_of([&] { solve(p, 1.0); }) == ErrorKind::retardation_violated);
    SolverConfig bad;
    bad.theta = 1.5;
    CHECK(kind_of([&] { solve(fixtures::unit_delay(), 1.0, bad); }) == ErrorKind::invalid_argument);
}

TEST_CASE("window chaining", "[picard][solve][property]")
{
    SolverConfig cfg;
    cfg.grid.points_per_window = 64;
    const auto sol = solve(fixtures::unit_delay(), 4.0, cfg);
    const auto& windows = sol.path().windows();
    REQUIRE(windows.size() == 8);
    for (std::size_t i = 0; i + 1 < windows.size(); ++i) {
        const auto& left = *windows[i];
        const auto& right = *windows[i + 1];
        CHECK(left.t_end() == right.t_start());
        // junction sample shared exactly
        CHECK(left.component(0).samples().back() == right.component(0).samples().front());
        CHECK(left(0, left.t_end()) == right(0, right.t_start()));
    }
    const auto& rep = sol.report();
    for (std::size_t i = 0; i + 1 < rep.windows.size(); ++i) {
        CHECK(rep.windows[i].window.t_end == rep.windows[i + 1].window.t_start);
        CHECK(rep.windows[i].window.q <= cfg.theta + kContractionSlack);
    }
    CHECK(rep.windows.back().window.t_end == 4.0);
    const auto grid = sol.grid();
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == 4.0);
    CHECK(grid.size() == 8 * 63 + 1);
}

TEST_CASE("horizon never leaves a sliver window", "[picard][solve]")
{
    SolverConfig cfg;
    cfg.grid.points_per_window = 32;
    const auto sol = solve(fixtures::unit_delay(), 1.0 + 1e-9, cfg);
    for (const auto& w : sol.report().windows) CHECK(w.window.length() > 1e-3);
    CHECK(sol.t_end() == 1.0 + 1e-9);
}

TEST_CASE("extending a solution equals solving at once", "[picard][solve]")
{
    const auto p = fixtures::unit_delay();
    const auto once = solve(p, 3.0);
    const auto first = solve(p, 1.5);
    const auto more = extend(p, first, 3.0);
    CHECK(more.report().total_windows() == once.report().total_windows());
    // window edges may differ in the last bits, so agreement is to roundoff
    for (double t : once.grid()) CHECK_THAT(more(0, t), WithinAbs(once(0, t), 1e-12));
    // the earlier solution is untouched
    CHECK(first.t_end() == 1.5);
    CHECK(extend(p, more, 2.0).t_end() == 3.0);
}

TEST_CASE("solutions are deterministic", "[picard][solve]")
{
    const auto a = solve(fixtures::pantograph(), 1.0);
    const auto b = solve(fixtures::pantograph(), 1.0);
    for (double t : a.grid()) CHECK(a(0, t) == b(0, t));
}

TEST_CASE("contraction of the operator on random pairs", "[picard][property]")
{
    SolverConfig cfg;
    std::mt19937_64 rng(42);
    for (const auto& p : {fixtures::unit_delay(), fixtures::exponential(), fixtures::pantograph()}) {
        auto fw = first_window(p, cfg);
        for (int i = 0; i < 100; ++i) {
            const auto x = fixtures::random_member(rng, fw.chain, fw.grid, cfg.interp, 1.0);
            const auto y = fixtures::random_member(rng, fw.chain, fw.grid, cfg.interp, 1.0);
            const double before = distance(x, y);
            const double after = distance(apply_operator(p, x, fw.window, cfg), apply_operator(p, y, fw.window, cfg));
            CHECK(after <= fw.window.q * before * 1.01);
        }
    }
}

TEST_CASE("sampled deviation distance is bounded by N rho", "[picard][property]")
{
    SolverConfig cfg;
    std::mt19937_64 rng(43);
    auto two_delays = fixtures::unit_delay();
    two_delays.n_deviations = 2;
    two_delays.rhs = {[](double, std::span<const double> u) { return 0.5 * (u[0] + u[1]); }};
    two_delays.deviation = {[](double t) { return t - 0.1; }, [](double t) { return 0.8 * t; }};
    for (const auto& p : {fixtures::unit_delay(), fixtures::exponential(), fixtures::pantograph(), two_delays}) {
        auto fw = first_window(p, cfg);
        for (int i = 0; i < 100; ++i) {
            const auto x = fixtures::random_member(rng, fw.chain, fw.grid, cfg.interp, 1.0);
            const auto y = fixtures::random_member(rng, fw.chain, fw.grid, cfg.interp, 1.0);
            const double D = fixtures::sampled_deviation_distance(p, x, y, fw.window, 1001);
            CHECK(D <= static_cast<double>(p.n_deviations) * distance(x, y) * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("different initial iterates reach the same solution", "[picard][property]")
{
    for (const auto& p : {fixtures::unit_delay(), fixtures::exponential(), fixtures::pantograph()}) {
        SolverConfig a;
        SolverConfig b;
        b.initial_guess = InitialGuess::linear_extrapolation;
        const auto sa = solve(p, 2.0, a);
        const auto sb = solve(p, 2.0, b);
        double worst = 0.0;
        for (double t : sa.grid()) worst = std::max(worst, std::abs(sa(0, t) - sb(0, t)));
        CHECK(worst <= 2.0 * a.tol);
    }
}

TEST_CASE("residual of solutions", "[picard][residual]")
{
    SECTION("exact constant solution")
    {
        const auto p = constant_rhs(0.0, 3.0);
        const auto sol = solve(p, 2.0);
        CHECK(residual(p, sol)[0] == 0.0);
    }
    SECTION("unit delay at single and double resolution")
    {
        const auto p = fixtures::unit_delay();
        const auto sol = solve(p, 4.0);
        CHECK(residual(p, sol)[0] <= 1e-10);
        CHECK(residual(p, sol, 2)[0] <= 1e-10);
        CHECK(residual(p, sol, 2, Quadrature::trapezoid)[0] <= 1e-4);
    }
    SECTION("pantograph")
    {
        const auto p = fixtures::pantograph();
        const auto sol = solve(p, 1.0);
        CHECK(residual(p, sol, 2)[0] <= 1e-8);
    }
    SECTION("a corrupted sample is detected")
    {
        const auto p = fixtures::unit_delay();
        const auto sol = solve(p, 2.0);
        // rebuild the chain with one sample moved by 0.1
        const auto& windows = sol.path().windows();
        auto chain = std::make_shared<const WindowChain<Direction::forward>>(p.prescribed, p.anchor);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& c = windows[i]->component(0);
            std::vector<double> y(c.samples().begin(), c.samples().end());
            if (i == 1) y[y.size() / 2] += 0.1;
            std::vector<double> g(c.breakpoints().begin(), c.breakpoints().end());
            std::vector<double> m(c.slopes().begin(), c.slopes().end());
            chain = chain->append(Trajectory({PiecewiseFunction(g, y, c.interp(), window_tails(chain)[0], m)}));
        }
        const Solution<Direction::forward> bad(chain, sol.report());
        CHECK(residual(p, bad)[0] >= 0.09);
    }
}

TEST_CASE("advanced problems", "[picard][advanced]")
{
    SECTION("zero right-hand side keeps the terminal constant")
    {
        auto p = fixtures::unit_advance();
        p.rhs = {[](double, std::span<const double>) { return 0.0; }};
        p.majorant = {[](double) { return 0.0; }};
        p.prescribed = {fixtures::constant_terminal(0.75, 0.0)};
        const auto sol = solve_advanced(p, -3.0);
        for (double t : sol.grid()) CHECK(sol(0, t) == 0.75);
    }
    SECTION("unit advance")
    {
        const auto sol = solve_advanced(fixtures::unit_advance(), -2.0);
        CHECK_THAT(sol(0, -1.0), WithinAbs(0.0, 1e-12));
        CHECK_THAT(sol(0, -2.0), WithinAbs(-0.5, 1e-12));
        for (double t : sol.grid()) {
            const double want = t >= -1.0 ? 1.0 + t : 1.5 + 0.5 * t * t + 2.0 * t;
            CHECK_THAT(sol(0, t), WithinAbs(want, 1e-12));
        }
        CHECK(sol.t_begin() == -2.0);
        CHECK(sol.t_end() == 0.0);
        CHECK(sol(0, 10.0) == 1.0);
        const auto grid = sol.grid();
        CHECK(std::is_sorted(grid.begin(), grid.end()));
    }
    SECTION("a delay in an advanced problem is rejected")
    {
        auto p = fixtures::unit_advance();
        p.deviation = {[](double t) { return t - 1.0; }};
        CHECK(kind_of([&] { solve_advanced(p, -1.0); }) == ErrorKind::advance_violated);
    }
    SECTION("residual in the backward integrated form")
    {
        const auto p = fixtures::unit_advance();
        const auto sol = solve_advanced(p, -2.0);
        CHECK(residual(p, sol, 2)[0] <= 1e-10);
    }
}

TEST_CASE("forward and backward solves are dual under time reversal", "[picard][advanced][property]")
{
    for (const auto& p : {fixtures::unit_delay(), fixtures::exponential(), fixtures::pantograph()}) {
        const SolverConfig cfg;
        const auto forward = solve(p, 2.0, cfg);
        const auto backward = solve_advanced(reflect(p), -2.0, cfg);
        double worst = 0.0;
        for (double t : forward.grid()) worst = std::max(worst, std::abs(forward(0, t) - backward(0, -t)));
        CHECK(worst <= cfg.tol);
        // and back again
        const auto again = solve(reflect(reflect(p)), 2.0, cfg);
        for (double t : forward.grid()) CHECK(again(0, t) == forward(0, t));
    }
}
