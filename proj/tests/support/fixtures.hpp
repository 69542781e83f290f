#pragma once

#include "fdesolve/expr.hpp"
#include "fdesolve/funcspace.hpp"
#include "fdesolve/oracle.hpp"
#include "fdesolve/picard.hpp"
#include "fdesolve/problem.hpp"

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace fixtures {

using namespace fdesolve;

inline PiecewiseFunction constant_history(double c, double t0)
{
    return PiecewiseFunction::from_tail(Tail{[c](double) { return c; }, -kInfinity, t0});
}

inline PiecewiseFunction constant_terminal(double c, double tau0)
{
    return PiecewiseFunction::from_tail(Tail{[c](double) { return c; }, tau0, kInfinity});
}

/// x'(t) = a * x(d(t)), scalar, constant majorant |a|.
inline RetardedIVP scalar_problem(double a, TimeFunction deviation, double history = 1.0)
{
    RetardedIVP p;
    p.n_components = 1;
    p.n_deviations = 1;
    p.rhs = {[a](double, std::span<const double> u) { return a * u[0]; }};
    p.deviation = {std::move(deviation)};
    p.majorant = {[a](double) { return std::abs(a); }};
    p.prescribed = {constant_history(history, 0.0)};
    p.anchor = 0.0;
    return p;
}

/// Problem 1: x'(t) = x(t - 1), x = 1 on (-inf, 0].
inline RetardedIVP unit_delay() { return scalar_problem(1.0, [](double t) { return t - 1.0; }); }

/// Problem 2: x'(t) = x(t), x(0) = 1.
inline RetardedIVP exponential() { return scalar_problem(1.0, [](double t) { return t; }); }

/// Problem 3: x'(t) = x(t / 2), x(0) = 1.
inline RetardedIVP pantograph() { return scalar_problem(1.0, [](double t) { return 0.5 * t; }); }

/// x'(t) = x(t + 1), x = 1 on [0, +inf).
inline AdvancedTVP unit_advance()
{
    AdvancedTVP p;
    p.n_components = 1;
    p.n_deviations = 1;
    p.rhs = {[](double, std::span<const double> u) { return u[0]; }};
    p.deviation = {[](double t) { return t + 1.0; }};
    p.majorant = {[](double) { return 1.0; }};
    p.prescribed = {constant_terminal(1.0, 0.0)};
    p.anchor = 0.0;
    return p;
}

inline oracle::PolynomialDelaySystem unit_delay_system()
{
    using oracle::Polynomial;
    return oracle::PolynomialDelaySystem{1, 1, {Polynomial::constant(1.0)}, {Polynomial{}}, {1.0},
                                         {Polynomial::constant(1.0)}, 0.0};
}

/// exp(t) for the ODE reduction.
inline double exponential_exact(std::size_t, double t) { return std::exp(t); }

/// A random member of the first window's space: junction value pinned to
/// the prescribed data, interior samples and slopes perturbed.
template <Direction Dir>
Trajectory random_member(std::mt19937_64& rng, const std::shared_ptr<const WindowChain<Dir>>& chain,
                         std::span<const double> grid, Interp interp, double scale)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const auto tails = window_tails(chain);
    const double junction = chain->frontier();
    std::vector<PiecewiseFunction> comps;
    // Smooth base plus rough noise so that pairs differ both slowly and sharply.
    for (std::size_t k = 0; k < chain->components(); ++k) {
        const double psi = chain->value(k, junction);
        const double a = unit(rng) * scale;
        const double b = unit(rng) * scale;
        const double noise = std::abs(unit(rng)) * scale;
        std::vector<double> y(grid.size());
        std::vector<double> m(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double s = grid[i] - junction;
            y[i] = psi + a * s + b * std::sin(3.0 * s) + noise * unit(rng) * std::abs(s);
            m[i] = a + 3.0 * b * std::cos(3.0 * s) + noise * unit(rng);
        }
        const std::size_t pin = Dir == Direction::forward ? 0 : grid.size() - 1;
        y[pin] = psi;
        comps.emplace_back(std::vector<double>(grid.begin(), grid.end()), std::move(y), interp, tails[k],
                           interp == Interp::cubic_hermite ? std::move(m) : std::vector<double>{});
    }
    return Trajectory(std::move(comps));
}

/// D(x, y) = max over sampled tau of sum_{m,j} |x_m(d_mj(tau)) - y_m(d_mj(tau))|.
template <Direction Dir>
double sampled_deviation_distance(const DeviatingProblem<Dir>& p, const Trajectory& x, const Trajectory& y,
                                  const Window& w, std::size_t samples)
{
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double tau = w.t_start + w.length() * static_cast<double>(s) / static_cast<double>(samples - 1);
        double sum = 0.0;
        for (std::size_t m = 0; m < p.n_components; ++m) {
            for (std::size_t j = 0; j < p.n_deviations; ++j) {
                const double d = p.deviation[p.deviation_index(m, j)](tau);
                sum += std::abs(x.component(m)(d) - y.component(m)(d));
            }
        }
        worst = std::max(worst, sum);
    }
    return worst;
}

/// Random expression trees. Literals are nonnegative; negation only
/// appears as an explicit node, so printing and re-parsing must reproduce
/// the tree exactly.
class AstGenerator {
public:
    AstGenerator(std::uint64_t seed, std::size_t n, std::size_t N)
        : rng_(seed)
        , n_(n)
        , N_(N)
    {
    }

    expr::NodePtr operator()(int depth) { return node(depth); }

    std::mt19937_64& rng() noexcept { return rng_; }

private:
    expr::NodePtr leaf()
    {
        std::uniform_int_distribution<int> pick(0, 3);
        switch (pick(rng_)) {
        case 0: return expr::build::time();
        case 1: {
            std::uniform_int_distribution<std::size_t> k(1, n_);
            std::uniform_int_distribution<std::size_t> j(1, N_);
            return expr::build::placeholder(k(rng_), j(rng_));
        }
        case 2: {
            std::uniform_int_distribution<int> v(0, 9);
            return expr::build::number(v(rng_));
        }
        default: {
            std::uniform_real_distribution<double> v(0.0, 100.0);
            return expr::build::number(std::ldexp(std::floor(v(rng_) * 1024.0), -10));
        }
        }
    }

    expr::NodePtr node(int depth)
    {
        if (depth <= 0) {
            return leaf();
        }
        std::uniform_int_distribution<int> pick(0, 9);
        const int c = pick(rng_);
        using expr::NodeKind;
        switch (c) {
        case 0: return leaf();
        case 1: return expr::build::negate(node(depth - 1));
        case 2: return expr::build::binary(NodeKind::add, node(depth - 1), node(depth - 1));
        case 3: return expr::build::binary(NodeKind::sub, node(depth - 1), node(depth - 1));
        case 4: return expr::build::binary(NodeKind::mul, node(depth - 1), node(depth - 1));
        case 5: return expr::build::binary(NodeKind::div, node(depth - 1), node(depth - 1));
        case 6: return expr::build::binary(NodeKind::pow, node(depth - 1), node(depth - 1));
        case 7: {
            std::uniform_int_distribution<int> f(0, 5);
            return expr::build::call(static_cast<expr::Function>(f(rng_)), {node(depth - 1)});
        }
        case 8: {
            std::uniform_int_distribution<int> f(0, 1);
            const auto fn = f(rng_) == 0 ? expr::Function::min : expr::Function::max;
            std::uniform_int_distribution<int> count(2, 3);
            std::vector<expr::NodePtr> args;
            for (int i = count(rng_); i > 0; --i) {
                args.push_back(node(depth - 1));
            }
            return expr::build::call(fn, std::move(args));
        }
        default: return expr::build::binary(NodeKind::add, leaf(), node(depth - 1));
        }
    }

    std::mt19937_64 rng_;
    std::size_t n_;
    std::size_t N_;
};

/// Random expression in t only (no placeholders), bounded and defined on
/// all of R: built from sin, cos, polynomials and constants.
inline std::string random_time_coefficient(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> pick(0, 5);
    std::uniform_real_distribution<double> c(-3.0, 3.0);
    auto num = [&] {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", c(rng));
        return std::string(buf);
    };
    switch (pick(rng)) {
    case 0: return num();
    case 1: return "(" + num() + ")*t";
    case 2: return "sin(" + num() + "*t)";
    case 3: return "(" + num() + ")*cos(t)";
    case 4: return "(" + num() + " + t^2)";
    default: return "exp(-t^2)*(" + num() + ")";
    }
}

/// Random expression that is affine in the placeholders, written in
/// assorted surface forms (distributed, factored, negated, divided).
inline std::string random_affine(std::mt19937_64& rng, std::size_t n, std::size_t N)
{
    std::uniform_int_distribution<std::size_t> k(1, n);
    std::uniform_int_distribution<std::size_t> j(1, N);
    std::uniform_int_distribution<int> terms(1, 4);
    std::uniform_int_distribution<int> form(0, 5);
    auto ph = [&] { return "u[" + std::to_string(k(rng)) + "][" + std::to_string(j(rng)) + "]"; };
    std::string out = random_time_coefficient(rng);
    for (int i = terms(rng); i > 0; --i) {
        const std::string c = random_time_coefficient(rng);
        switch (form(rng)) {
        case 0: out += " + " + c + "*" + ph(); break;
        case 1: out += " - " + ph() + "*" + c; break;
        case 2: out += " + (" + c + ")*(" + ph() + " - " + ph() + ")"; break;
        case 3: out += " + -(" + ph() + ")/2"; break;
        case 4: out += " + " + ph() + "/(2 + sin(t)^2)"; break;
        default: out = "(" + out + ")*" + c + " + " + ph(); break;
        }
    }
    return out;
}

inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("fdesolve_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace fixtures
