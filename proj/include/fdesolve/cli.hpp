#pragma once

#include "fdesolve/config.hpp"
#include "fdesolve/error.hpp"
#include "fdesolve/oracle.hpp"
#include "fdesolve/picard.hpp"
#include "fdesolve/problem.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace fdesolve::cli {

inline constexpr std::string_view kVersion = "0.1.0";

enum class ExitCode : int {
    ok = 0,
    config = 1,       ///< syntax, semantics, expression errors, bad flags
    validation = 2,   ///< retardation/advance violations, tail gaps, negative majorants
    solver = 3,       ///< no convergence, zero progress, evaluation faults, failed --verify
    io = 4,           ///< unreadable config, unwritable output
};

constexpr ExitCode exit_code_for(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::config_syntax:
    case ErrorKind::config_semantic:
    case ErrorKind::parse_error:
    case ErrorKind::placeholder_out_of_range:
    case ErrorKind::placeholder_forbidden:
    case ErrorKind::nonconstant_delay:
    case ErrorKind::nonpolynomial_input:
    case ErrorKind::invalid_argument:
        return ExitCode::config;
    case ErrorKind::retardation_violated:
    case ErrorKind::advance_violated:
    case ErrorKind::negative_majorant:
    case ErrorKind::tail_gap:
        return ExitCode::validation;
    case ErrorKind::io_error:
        return ExitCode::io;
    case ErrorKind::no_convergence:
    case ErrorKind::zero_progress:
    case ErrorKind::eval_error:
    case ErrorKind::no_tail_defined:
    case ErrorKind::out_of_span:
    case ErrorKind::grid_mismatch:
    case ErrorKind::discontinuous_junction:
        return ExitCode::solver;
    }
    return ExitCode::solver;
}

enum class VerifyMode { none, steps, pantograph, rk4 };

struct RunOptions {
    std::filesystem::path config;
    VerifyMode verify = VerifyMode::none;
    std::optional<std::filesystem::path> report;
    std::optional<double> sample_step;
    bool quiet = false;
};

/// Allowed oracle disagreement per mode.
inline constexpr double kStepsTolerance = 1e-6;
inline constexpr double kPantographTolerance = 1e-6;
inline constexpr double kRk4Tolerance = 1e-5;

struct VerifyResult {
    std::string mode;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    /// max error_bound + 1e-2 h^2: what the certificate claims.
    double certified = 0.0;

    bool within_tolerance() const noexcept { return max_deviation <= tolerance; }
    bool certificate_holds() const noexcept { return max_deviation <= certified; }
    bool passed() const noexcept { return within_tolerance() && certificate_holds(); }
};

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Sample times in increasing order: the anchor, then multiples of `step`
/// toward the horizon, ending exactly on the horizon.
inline std::vector<double> sample_times(double anchor, double horizon, double step)
{
    const double span = std::abs(horizon - anchor);
    const double sign = horizon > anchor ? 1.0 : -1.0;
    const auto count = static_cast<std::size_t>(std::floor(span / step + 1e-9));
    std::vector<double> ts;
    for (std::size_t i = 0; i <= count; ++i) {
        ts.push_back(anchor + sign * static_cast<double>(i) * step);
    }
    if (std::abs(ts.back() - horizon) <= 1e-9 * step) {
        ts.back() = horizon;
    } else {
        ts.push_back(horizon);
    }
    if (sign < 0.0) {
        std::reverse(ts.begin(), ts.end());
    }
    return ts;
}

namespace detail {

using Samples = std::vector<std::vector<double>>;   // [row][component]

template <typename Reference>
double max_deviation(const std::vector<double>& times, const Samples& values, const Reference& ref)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t k = 0; k < values[i].size(); ++k) {
            worst = std::max(worst, std::abs(values[i][k] - ref(k, times[i])));
        }
    }
    return worst;
}

inline oracle::PolynomialDelaySystem polynomial_system(const config::ProblemConfig& cfg, bool reflect_advanced)
{
    const std::size_t n = cfg.n;
    const std::size_t N = cfg.N;
    std::vector<oracle::Polynomial> coefficient(n * n * N);
    std::vector<oracle::Polynomial> forcing(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto form = expr::affine_decompose(cfg.equations[k]);
        if (!form) {
            throw Error(ErrorKind::nonpolynomial_input,
                        "equation " + std::to_string(k + 1) + " is not affine in the placeholders");
        }
        forcing[k] = oracle::to_polynomial(form->constant);
        for (const auto& [flat, c] : form->coefficient) {
            const std::size_t j = flat / N;
            const std::size_t m = flat % N;
            coefficient[(k * n + j) * N + m] = oracle::to_polynomial(c);
        }
    }
    std::vector<double> offsets;
    for (const auto& d : cfg.delays) {
        offsets.push_back(reflect_advanced ? oracle::lead_of(d) : oracle::lag_of(d));
    }
    std::vector<oracle::Polynomial> data;
    for (const auto& e : cfg.prescribed) {
        data.push_back(oracle::to_polynomial(e));
    }
    if (!reflect_advanced) {
        return oracle::PolynomialDelaySystem{n, N, std::move(coefficient), std::move(forcing), std::move(offsets),
                                             std::move(data), cfg.anchor};
    }
    return oracle::PolynomialAdvanceSystem{n, N, std::move(coefficient), std::move(forcing), std::move(offsets),
                                           std::move(data), cfg.anchor}
        .reflected();
}

inline double verify_steps(const config::ProblemConfig& cfg, const std::vector<double>& times, const Samples& values)
{
    if (cfg.direction == Direction::forward) {
        const auto ref = oracle::method_of_steps(polynomial_system(cfg, false), cfg.horizon);
        return max_deviation(times, values, ref);
    }
    const oracle::ReflectedSolution ref(oracle::method_of_steps(polynomial_system(cfg, true), -cfg.horizon));
    return max_deviation(times, values, ref);
}

inline double verify_pantograph(const config::ProblemConfig& cfg, const std::vector<double>& times,
                                const Samples& values)
{
    auto reject = [](const std::string& why) {
        throw Error(ErrorKind::config_semantic, "--verify pantograph: " + why);
    };
    if (cfg.direction != Direction::forward || cfg.n != 1 || cfg.N != 1 || cfg.anchor != 0.0) {
        reject("needs a retarded scalar problem with one deviation and t0 = 0");
    }
    const auto form = expr::affine_decompose(cfg.equations[0]);
    if (!form || oracle::to_polynomial(form->constant).degree() >= 0 || form->coefficient.size() != 1) {
        reject("equation must be a * u[1][1]");
    }
    const auto a_poly = oracle::to_polynomial(form->coefficient.begin()->second);
    const auto q_poly = oracle::to_polynomial(cfg.delays[0]);
    const auto c_poly = oracle::to_polynomial(cfg.prescribed[0]);
    if (a_poly.degree() > 0 || c_poly.degree() > 0 || q_poly.degree() != 1 || q_poly.coefficient(0) != 0.0) {
        reject("needs a constant coefficient, constant history and deviation q * t");
    }
    const double a = a_poly.coefficient(0);
    const double q = q_poly.coefficient(1);
    const double c = c_poly.coefficient(0);
    if (!(q > 0.0 && q < 1.0)) {
        reject("needs 0 < q < 1");
    }
    auto ref = [&](std::size_t, double t) { return c * oracle::pantograph_series(a, q, 80, t).value; };
    return max_deviation(times, values, ref);
}

inline double verify_rk4(const config::ProblemConfig& cfg, const std::vector<double>& times, const Samples& values)
{
    for (const auto& d : cfg.delays) {
        const auto p = oracle::to_polynomial(d);
        if (p.degree() != 1 || p.coefficient(0) != 0.0 || p.coefficient(1) != 1.0) {
            throw Error(ErrorKind::config_semantic, "--verify rk4 needs every deviation equal to t");
        }
    }
    const std::size_t n = cfg.n;
    const std::size_t N = cfg.N;
    const double sign = cfg.direction == Direction::forward ? 1.0 : -1.0;
    // s = sign * t turns either direction into a forward ODE in s.
    oracle::OdeRhs f = [&](double s, std::span<const double> y, std::span<double> dy) {
        std::vector<double> u(n * N);
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] = y[i / N];
        }
        for (std::size_t k = 0; k < n; ++k) {
            dy[k] = sign * cfg.equations[k](sign * s, u);
        }
    };
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) {
        y[k] = cfg.prescribed[k](cfg.anchor);
    }
    std::vector<std::size_t> order(times.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = sign > 0.0 ? i : order.size() - 1 - i;
    }
    double worst = 0.0;
    double s = sign * times[order[0]];
    for (std::size_t idx = 0; idx < order.size(); ++idx) {
        const std::size_t i = order[idx];
        const double target = sign * times[i];
        if (target > s) {
            const double len = target - s;
            const double h = len / std::ceil(len / 1e-3);
            y = oracle::rk4_reference(f, y, s, h, target).back();
            s = target;
        }
        for (std::size_t k = 0; k < n; ++k) {
            worst = std::max(worst, std::abs(values[i][k] - y[k]));
        }
    }
    return worst;
}

inline std::string_view mode_name(VerifyMode m)
{
    switch (m) {
    case VerifyMode::steps: return "steps";
    case VerifyMode::pantograph: return "pantograph";
    case VerifyMode::rk4: return "rk4";
    case VerifyMode::none: break;
    }
    return "none";
}

inline void write_csv(const std::filesystem::path& path, std::size_t n, const std::vector<double>& times,
                      const Samples& values)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io_error, "cannot write '" + path.string() + "'");
    }
    out << "t";
    for (std::size_t k = 0; k < n; ++k) {
        out << ",phi_" << (k + 1);
    }
    out << '\n';
    for (std::size_t i = 0; i < times.size(); ++i) {
        out << format_double(times[i]);
        for (double v : values[i]) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
    if (!out.flush()) {
        throw Error(ErrorKind::io_error, "failed writing '" + path.string() + "'");
    }
}

inline void write_report(const std::filesystem::path& path, const config::ProblemConfig& cfg,
                         const SolveReport& report, const std::optional<VerifyResult>& verify)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io_error, "cannot write '" + path.string() + "'");
    }
    out << "direction: " << (cfg.direction == Direction::forward ? "retarded" : "advanced") << '\n';
    out << "components: " << cfg.n << '\n';
    out << "deviations: " << cfg.N << '\n';
    out << "anchor: " << format_double(cfg.anchor) << '\n';
    out << "horizon: " << format_double(cfg.horizon) << '\n';
    out << "theta: " << format_double(cfg.solver.theta) << '\n';
    out << "tol: " << format_double(cfg.solver.tol) << '\n';
    out << "windows: " << report.total_windows() << '\n';
    out << "total_iterations: " << report.total_iterations() << '\n';
    out << "max_error_bound: " << format_double(report.max_error_bound()) << '\n';
    for (std::size_t i = 0; i < report.windows.size(); ++i) {
        const auto& w = report.windows[i];
        out << '\n';
        out << "window: " << (i + 1) << '\n';
        out << "t_start: " << format_double(w.window.t_start) << '\n';
        out << "t_end: " << format_double(w.window.t_end) << '\n';
        out << "q: " << format_double(w.window.q) << '\n';
        out << "iterations: " << w.iterations << '\n';
        out << "error_bound: " << format_double(w.error_bound) << '\n';
        out << "residual: " << format_double(w.final_residual) << '\n';
        out << "step: " << format_double(w.step) << '\n';
    }
    if (verify) {
        out << '\n';
        out << "verify_mode: " << verify->mode << '\n';
        out << "verify_max_deviation: " << format_double(verify->max_deviation) << '\n';
        out << "verify_tolerance: " << format_double(verify->tolerance) << '\n';
        out << "verify_certified_bound: " << format_double(verify->certified) << '\n';
        out << "verify_certificate: " << (verify->certificate_holds() ? "holds" : "violated") << '\n';
        out << "verify_status: " << (verify->passed() ? "pass" : "fail") << '\n';
    }
    if (!out.flush()) {
        throw Error(ErrorKind::io_error, "failed writing '" + path.string() + "'");
    }
}

template <Direction Dir>
int execute(const config::ProblemConfig& cfg, const RunOptions& opts, std::ostream& out, std::ostream& err)
{
    const auto problem = config::build_problem<Dir>(cfg);
    const auto sol = solve_to(problem, cfg.horizon, cfg.solver);
    const auto times = sample_times(cfg.anchor, cfg.horizon, cfg.output.sample_step);
    Samples values(times.size(), std::vector<double>(cfg.n));
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t k = 0; k < cfg.n; ++k) {
            values[i][k] = sol(k, times[i]);
        }
    }

    std::optional<VerifyResult> verify;
    if (opts.verify != VerifyMode::none) {
        VerifyResult v;
        v.mode = std::string(mode_name(opts.verify));
        switch (opts.verify) {
        case VerifyMode::steps:
            v.max_deviation = verify_steps(cfg, times, values);
            v.tolerance = kStepsTolerance;
            break;
        case VerifyMode::pantograph:
            v.max_deviation = verify_pantograph(cfg, times, values);
            v.tolerance = kPantographTolerance;
            break;
        case VerifyMode::rk4:
            v.max_deviation = verify_rk4(cfg, times, values);
            v.tolerance = kRk4Tolerance;
            break;
        case VerifyMode::none: break;
        }
        double h = 0.0;
        for (const auto& w : sol.report().windows) {
            h = std::max(h, w.step);
        }
        v.certified = sol.report().max_error_bound() + 1e-2 * h * h;
        verify = v;
    }

    std::filesystem::path report_path = opts.report ? *opts.report : cfg.output.report;
    if (report_path.empty()) {
        report_path = cfg.output.path;
        report_path += ".report";
    }
    write_csv(cfg.output.path, cfg.n, times, values);
    write_report(report_path, cfg, sol.report(), verify);

    if (!opts.quiet) {
        out << "solved " << (Dir == Direction::forward ? "retarded" : "advanced") << " problem on ["
            << format_double(sol.t_begin()) << ", " << format_double(sol.t_end()) << "] with "
            << sol.report().total_windows() << " windows, " << sol.report().total_iterations()
            << " iterations, max error bound " << format_double(sol.report().max_error_bound()) << '\n';
        out << "wrote " << cfg.output.path.string() << " and " << report_path.string() << '\n';
        if (verify) {
            out << "verify " << verify->mode << ": max deviation " << format_double(verify->max_deviation)
                << " (tolerance " << format_double(verify->tolerance) << ", certificate "
                << (verify->certificate_holds() ? "holds" : "violated") << ")\n";
        }
    }
    if (verify && !verify->passed()) {
        err << "fdesolve: --verify " << verify->mode << " failed: deviation "
            << format_double(verify->max_deviation) << " exceeds "
            << format_double(std::min(verify->tolerance, verify->certified)) << '\n';
        return static_cast<int>(ExitCode::solver);
    }
    return static_cast<int>(ExitCode::ok);
}

}  // namespace detail

/// Loads, solves, writes CSV and report. Returns the process exit code.
inline int run(const RunOptions& opts, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    try {
        auto cfg = config::load_config(opts.config);
        if (opts.sample_step) {
            if (!(*opts.sample_step > 0.0)) {
                throw Error(ErrorKind::config_semantic, "--sample-step must be positive");
            }
            cfg.output.sample_step = *opts.sample_step;
        }
        return cfg.direction == Direction::forward ? detail::execute<Direction::forward>(cfg, opts, out, err)
                                                   : detail::execute<Direction::backward>(cfg, opts, out, err);
    } catch (const Error& e) {
        err << "fdesolve: " << e.what() << '\n';
        return static_cast<int>(exit_code_for(e.kind()));
    } catch (const std::exception& e) {
        err << "fdesolve: " << e.what() << '\n';
        return static_cast<int>(ExitCode::solver);
    }
}

/// Command-line entry point: `fdesolve solve <config> [options]`.
inline int main_entry(int argc, const char* const* argv, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr)
{
    CLI::App app{"Windowed Picard solver for retarded and advanced functional differential equations", "fdesolve"};
    app.set_version_flag("--version", "fdesolve " + std::string(kVersion));
    app.require_subcommand(1);

    RunOptions opts;
    std::string verify;
    std::string report;
    double sample_step = 0.0;
    auto* solve_cmd = app.add_subcommand("solve", "Solve the problem described by a config file");
    solve_cmd->add_option("config", opts.config, "Problem definition file")->required();
    solve_cmd->add_option("--verify", verify, "Cross-check against an oracle")
        ->check(CLI::IsMember({"steps", "pantograph", "rk4"}));
    auto* report_opt = solve_cmd->add_option("--report", report, "Report file (overrides the config)");
    auto* step_opt = solve_cmd->add_option("--sample-step", sample_step, "CSV sampling step (overrides the config)")
                         ->check(CLI::PositiveNumber);
    solve_cmd->add_flag("--quiet", opts.quiet, "Suppress the summary on stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return static_cast<int>(ExitCode::ok);
        }
        err << "fdesolve: " << e.what() << "\n\n" << app.help();
        return static_cast<int>(ExitCode::config);
    }

    if (verify == "steps") opts.verify = VerifyMode::steps;
    else if (verify == "pantograph") opts.verify = VerifyMode::pantograph;
    else if (verify == "rk4") opts.verify = VerifyMode::rk4;
    if (report_opt->count() > 0) opts.report = report;
    if (step_opt->count() > 0) opts.sample_step = sample_step;
    return run(opts, out, err);
}

}  // namespace fdesolve::cli
