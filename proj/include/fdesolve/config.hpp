#pragma once

// Problem definition files.
//
//   file     = { line } ;
//   line     = blank | comment | section | entry ;
//   comment  = "#" { any } ;
//   section  = "[" name "]" ;
//   entry    = key "=" value [ comment ] ;
//
// Sections and keys:
//
//   [problem]     direction = retarded | advanced
//                 n = <int>, N = <int>
//                 t0 = <time>        (retarded)   or   tau0 = <time>   (advanced)
//                 horizon = <time>   (t_end for retarded, t_start for advanced)
//   [equations]   <k> = <expr in t and u[m][j]>                    k = 1..n
//   [delays]      <k>,<j> = <expr in t>                           j = 1..N
//   [lipschitz]   <k> = <expr in t>          (optional for affine right-hand sides)
//   [history]     <k> = <expr in t>          (retarded)
//   [terminal]    <k> = <expr in t>          (advanced)
//   [solver]      theta, tol, grid_points, max_window, min_window,
//                 interp = linear | cubic, quadrature = trapezoid | cubic,
//                 initial_guess = constant | linear
//   [output]      path, sample_step, report
//
// Relative output paths are resolved against the directory of the file.

#include "fdesolve/error.hpp"
#include "fdesolve/expr.hpp"
#include "fdesolve/funcspace.hpp"
#include "fdesolve/picard.hpp"
#include "fdesolve/problem.hpp"

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fdesolve::config {

struct OutputSettings {
    std::filesystem::path path = "solution.csv";
    double sample_step = 0.01;
    /// Report file; empty means "<path>.report".
    std::filesystem::path report;
};

struct ProblemConfig {
    Direction direction = Direction::forward;
    std::size_t n = 0;
    std::size_t N = 0;
    std::vector<expr::Expr> equations;    // n
    std::vector<expr::Expr> delays;       // index (k - 1) * N + (j - 1)
    std::vector<expr::Expr> lipschitz;    // n, explicit or derived
    std::vector<bool> lipschitz_derived;  // n
    std::vector<expr::Expr> prescribed;   // history (retarded) or terminal data (advanced)
    double anchor = 0.0;                  // t0 or tau0
    double horizon = 0.0;
    SolverConfig solver;
    OutputSettings output;
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
    std::size_t value_column = 0;   // 1-based column of the value's first character
    bool used = false;
};

struct Section {
    std::size_t line = 0;
    std::vector<Entry> entries;
};

[[noreturn]] inline void syntax(std::size_t line, const std::string& what)
{
    throw Error(ErrorKind::config_syntax, "line " + std::to_string(line) + ": " + what);
}

[[noreturn]] inline void semantic(std::size_t line, const std::string& what)
{
    if (line == 0) {
        throw Error(ErrorKind::config_semantic, what);
    }
    throw Error(ErrorKind::config_semantic, "line " + std::to_string(line) + ": " + what);
}

inline std::map<std::string, Section> split_sections(std::string_view text)
{
    std::map<std::string, Section> sections;
    Section* current = nullptr;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                syntax(line_no, "section header lacks ']'");
            }
            const std::string name(trim(line.substr(1, line.size() - 2)));
            if (name.empty()) {
                syntax(line_no, "empty section name");
            }
            if (sections.count(name) != 0) {
                syntax(line_no, "section [" + name + "] appears twice");
            }
            current = &sections[name];
            current->line = line_no;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            syntax(line_no, "expected 'key = value'");
        }
        if (current == nullptr) {
            syntax(line_no, "entry outside of any section");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) {
            syntax(line_no, "missing key before '='");
        }
        if (value.empty()) {
            syntax(line_no, "missing value for '" + key + "'");
        }
        for (const auto& e : current->entries) {
            if (e.key == key) {
                syntax(line_no, "key '" + key + "' repeats line " + std::to_string(e.line));
            }
        }
        const auto column = static_cast<std::size_t>(value.data() - raw.data()) + 1;
        current->entries.push_back(Entry{key, std::string(value), line_no, column, false});
    }
    return sections;
}

inline Entry* find(Section* s, std::string_view key)
{
    if (s == nullptr) {
        return nullptr;
    }
    for (auto& e : s->entries) {
        if (e.key == key) {
            e.used = true;
            return &e;
        }
    }
    return nullptr;
}

inline double to_number(const Entry& e)
{
    double v = 0.0;
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        // Allow constant expressions such as "1/3" or "-2".
        try {
            return expr::parse(e.value, expr::Context{0, 0, false})(0.0);
        } catch (const Error&) {
            semantic(e.line, "'" + e.key + "' needs a number, got '" + e.value + "'");
        }
    }
    return v;
}

inline std::size_t to_count(const Entry& e)
{
    std::size_t v = 0;
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        semantic(e.line, "'" + e.key + "' needs a nonnegative integer, got '" + e.value + "'");
    }
    return v;
}

/// Expression parse with positions rebased onto the file.
inline expr::Expr parse_at(const Entry& e, expr::Context ctx)
{
    try {
        return expr::parse(e.value, ctx);
    } catch (const expr::ParseError& pe) {
        // drop the expression-relative "line:column: " prefix
        std::string what = pe.message();
        if (const auto cut = what.find(": "); cut != std::string::npos) {
            what = what.substr(cut + 2);
        }
        throw Error(pe.kind(), "line " + std::to_string(e.line) + ", column " +
                                   std::to_string(e.value_column + pe.offset()) + ": " + what);
    }
}

/// Parses "k" or "k,j" keys into 1-based indices.
inline std::vector<std::size_t> indices(const Entry& e, std::size_t count)
{
    std::vector<std::size_t> out;
    std::string_view rest = e.key;
    while (true) {
        const auto comma = rest.find(',');
        const std::string_view part = trim(rest.substr(0, comma));
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size()) {
            syntax(e.line, "key '" + e.key + "' is not an index list");
        }
        out.push_back(v);
        if (comma == std::string_view::npos) {
            break;
        }
        rest = rest.substr(comma + 1);
    }
    if (out.size() != count) {
        syntax(e.line, "key '" + e.key + "' needs " + std::to_string(count) + " index(es)");
    }
    return out;
}

/// Fills `slots` from a section keyed by component index.
inline void read_per_component(Section* s, const std::string& name, std::size_t n, expr::Context ctx,
                               std::vector<std::optional<expr::Expr>>& slots)
{
    slots.assign(n, std::nullopt);
    if (s == nullptr) {
        return;
    }
    for (auto& e : s->entries) {
        e.used = true;
        const auto idx = indices(e, 1);
        if (idx[0] < 1 || idx[0] > n) {
            semantic(e.line, "[" + name + "] index " + std::to_string(idx[0]) + " outside 1.." + std::to_string(n));
        }
        slots[idx[0] - 1] = parse_at(e, ctx);
    }
}

inline void reject_unused(const std::map<std::string, Section>& sections)
{
    for (const auto& [name, s] : sections) {
        for (const auto& e : s.entries) {
            if (!e.used) {
                semantic(e.line, "unknown key '" + e.key + "' in [" + name + "]");
            }
        }
    }
}

}  // namespace detail

/// Parses and checks a problem definition. `base` anchors relative output
/// paths. Does not sample the deviations; see load_config.
inline ProblemConfig parse_config(std::string_view text, const std::filesystem::path& base = {})
{
    using detail::find;
    using detail::semantic;
    auto sections = detail::split_sections(text);
    for (const auto& [name, s] : sections) {
        static const std::vector<std::string> known{"problem", "equations", "delays", "lipschitz",
                                                    "history", "terminal", "solver", "output"};
        if (std::find(known.begin(), known.end(), name) == known.end()) {
            semantic(s.line, "unknown section [" + name + "]");
        }
    }
    auto section = [&](const std::string& name) -> detail::Section* {
        const auto it = sections.find(name);
        return it == sections.end() ? nullptr : &it->second;
    };
    auto required = [&](const std::string& name) -> detail::Section* {
        auto* s = section(name);
        if (s == nullptr) {
            semantic(0, "missing section [" + name + "]");
        }
        return s;
    };

    ProblemConfig cfg;
    auto* problem = required("problem");
    auto need = [&](detail::Section* s, const std::string& sec, std::string_view key) -> detail::Entry& {
        auto* e = find(s, key);
        if (e == nullptr) {
            semantic(s->line, "[" + sec + "] needs '" + std::string(key) + "'");
        }
        return *e;
    };

    const auto& dir = need(problem, "problem", "direction");
    if (dir.value == "retarded") {
        cfg.direction = Direction::forward;
    } else if (dir.value == "advanced") {
        cfg.direction = Direction::backward;
    } else {
        semantic(dir.line, "direction must be 'retarded' or 'advanced', got '" + dir.value + "'");
    }
    const bool retarded = cfg.direction == Direction::forward;
    const auto& n_entry = need(problem, "problem", "n");
    const auto& N_entry = need(problem, "problem", "N");
    cfg.n = detail::to_count(n_entry);
    cfg.N = detail::to_count(N_entry);
    if (cfg.n == 0) semantic(n_entry.line, "n must be at least 1");
    if (cfg.N == 0) semantic(N_entry.line, "N must be at least 1");
    const auto& anchor = need(problem, "problem", retarded ? "t0" : "tau0");
    cfg.anchor = detail::to_number(anchor);
    const auto& horizon = need(problem, "problem", "horizon");
    cfg.horizon = detail::to_number(horizon);
    if (retarded ? !(cfg.horizon > cfg.anchor) : !(cfg.horizon < cfg.anchor)) {
        semantic(horizon.line, retarded ? "horizon must exceed t0" : "horizon must precede tau0");
    }

    const expr::Context rhs_ctx{cfg.n, cfg.N, true};
    const expr::Context time_ctx{cfg.n, cfg.N, false};

    std::vector<std::optional<expr::Expr>> eqs;
    detail::read_per_component(required("equations"), "equations", cfg.n, rhs_ctx, eqs);
    for (std::size_t k = 0; k < cfg.n; ++k) {
        if (!eqs[k]) semantic(section("equations")->line, "[equations] lacks component " + std::to_string(k + 1));
        cfg.equations.push_back(*eqs[k]);
    }

    auto* delays = required("delays");
    std::vector<std::optional<expr::Expr>> dev(cfg.n * cfg.N);
    for (auto& e : delays->entries) {
        e.used = true;
        const auto idx = detail::indices(e, 2);
        if (idx[0] < 1 || idx[0] > cfg.n || idx[1] < 1 || idx[1] > cfg.N) {
            semantic(e.line, "[delays] index " + e.key + " outside 1.." + std::to_string(cfg.n) + ",1.." +
                                 std::to_string(cfg.N));
        }
        dev[(idx[0] - 1) * cfg.N + (idx[1] - 1)] = detail::parse_at(e, time_ctx);
    }
    for (std::size_t i = 0; i < dev.size(); ++i) {
        if (!dev[i]) {
            semantic(delays->line, "[delays] lacks " + std::to_string(i / cfg.N + 1) + "," +
                                       std::to_string(i % cfg.N + 1));
        }
        cfg.delays.push_back(*dev[i]);
    }

    const std::string data_name = retarded ? "history" : "terminal";
    if (section(retarded ? "terminal" : "history") != nullptr) {
        semantic(section(retarded ? "terminal" : "history")->line,
                 std::string(retarded ? "retarded problems take [history], not [terminal]"
                                      : "advanced problems take [terminal], not [history]"));
    }
    std::vector<std::optional<expr::Expr>> data;
    detail::read_per_component(required(data_name), data_name, cfg.n, time_ctx, data);
    for (std::size_t k = 0; k < cfg.n; ++k) {
        if (!data[k]) semantic(section(data_name)->line, "[" + data_name + "] lacks component " + std::to_string(k + 1));
        cfg.prescribed.push_back(*data[k]);
    }

    std::vector<std::optional<expr::Expr>> lip;
    detail::read_per_component(section("lipschitz"), "lipschitz", cfg.n, time_ctx, lip);
    for (std::size_t k = 0; k < cfg.n; ++k) {
        if (lip[k]) {
            cfg.lipschitz.push_back(*lip[k]);
            cfg.lipschitz_derived.push_back(false);
            continue;
        }
        auto derived = expr::auto_majorant(cfg.equations[k]);
        if (!derived) {
            semantic(section("equations")->line,
                     "equation " + std::to_string(k + 1) + " is not affine in u; give [lipschitz] " +
                         std::to_string(k + 1) + " explicitly");
        }
        cfg.lipschitz.push_back(*derived);
        cfg.lipschitz_derived.push_back(true);
    }

    if (auto* solver = section("solver")) {
        if (auto* e = find(solver, "theta")) cfg.solver.theta = detail::to_number(*e);
        if (auto* e = find(solver, "tol")) cfg.solver.tol = detail::to_number(*e);
        if (auto* e = find(solver, "grid_points")) cfg.solver.grid.points_per_window = detail::to_count(*e);
        if (auto* e = find(solver, "max_window")) cfg.solver.max_window = detail::to_number(*e);
        if (auto* e = find(solver, "min_window")) cfg.solver.min_window = detail::to_number(*e);
        if (auto* e = find(solver, "interp")) {
            if (e->value == "linear") cfg.solver.interp = Interp::linear;
            else if (e->value == "cubic") cfg.solver.interp = Interp::cubic_hermite;
            else semantic(e->line, "interp must be 'linear' or 'cubic'");
        }
        if (auto* e = find(solver, "quadrature")) {
            if (e->value == "trapezoid") cfg.solver.quadrature = Quadrature::trapezoid;
            else if (e->value == "cubic") cfg.solver.quadrature = Quadrature::cubic;
            else semantic(e->line, "quadrature must be 'trapezoid' or 'cubic'");
        }
        if (auto* e = find(solver, "initial_guess")) {
            if (e->value == "constant") cfg.solver.initial_guess = InitialGuess::constant;
            else if (e->value == "linear") cfg.solver.initial_guess = InitialGuess::linear_extrapolation;
            else semantic(e->line, "initial_guess must be 'constant' or 'linear'");
        }
        try {
            cfg.solver.validate();
        } catch (const Error& err) {
            semantic(solver->line, "[solver] " + err.message());
        }
    }

    if (auto* output = section("output")) {
        if (auto* e = find(output, "path")) cfg.output.path = e->value;
        if (auto* e = find(output, "report")) cfg.output.report = e->value;
        if (auto* e = find(output, "sample_step")) {
            cfg.output.sample_step = detail::to_number(*e);
            if (!(cfg.output.sample_step > 0.0)) semantic(e->line, "sample_step must be positive");
        }
    }
    if (!base.empty()) {
        if (cfg.output.path.is_relative()) cfg.output.path = base / cfg.output.path;
        if (!cfg.output.report.empty() && cfg.output.report.is_relative()) cfg.output.report = base / cfg.output.report;
    }

    detail::reject_unused(sections);
    return cfg;
}

/// The solver-side problem described by a config.
template <Direction Dir>
DeviatingProblem<Dir> build_problem(const ProblemConfig& cfg)
{
    if (cfg.direction != Dir) {
        throw Error(ErrorKind::invalid_argument, "config direction does not match the requested problem type");
    }
    DeviatingProblem<Dir> p;
    p.n_components = cfg.n;
    p.n_deviations = cfg.N;
    p.anchor = cfg.anchor;
    for (const auto& e : cfg.equations) {
        p.rhs.push_back([e](double t, std::span<const double> u) { return e(t, u); });
    }
    for (const auto& e : cfg.delays) {
        p.deviation.push_back([e](double t) { return e(t); });
    }
    for (const auto& e : cfg.lipschitz) {
        p.majorant.push_back([e](double t) { return e(t); });
    }
    for (const auto& e : cfg.prescribed) {
        auto fn = [e](double t) { return e(t); };
        if constexpr (Dir == Direction::forward) {
            p.prescribed.push_back(PiecewiseFunction::from_tail(Tail{fn, -kInfinity, cfg.anchor}));
        } else {
            p.prescribed.push_back(PiecewiseFunction::from_tail(Tail{fn, cfg.anchor, kInfinity}));
        }
    }
    return p;
}

/// Samples the deviations over the solve span: retarded configs must keep
/// every delay at or before t, advanced configs every advance at or after t.
inline void precheck(const ProblemConfig& cfg)
{
    const double lo = std::min(cfg.anchor, cfg.horizon);
    const double hi = std::max(cfg.anchor, cfg.horizon);
    if (cfg.direction == Direction::forward) {
        validate_deviations(build_problem<Direction::forward>(cfg), lo, hi, cfg.solver.grid,
                            cfg.solver.deviation_tol);
    } else {
        validate_deviations(build_problem<Direction::backward>(cfg), lo, hi, cfg.solver.grid,
                            cfg.solver.deviation_tol);
    }
}

/// Reads, parses and pre-checks a problem file.
inline ProblemConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io_error, "cannot open config '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    ProblemConfig cfg = parse_config(buf.str(), path.parent_path());
    precheck(cfg);
    return cfg;
}

}  // namespace fdesolve::config
