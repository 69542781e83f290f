#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace fdesolve {

/// Failure classes raised by the library. Each maps onto one CLI exit code
/// family (see cli.hpp).
enum class ErrorKind {
    invalid_argument,
    no_tail_defined,
    grid_mismatch,
    out_of_span,
    discontinuous_junction,
    retardation_violated,
    advance_violated,
    negative_majorant,
    zero_progress,
    tail_gap,
    no_convergence,
    parse_error,
    placeholder_out_of_range,
    placeholder_forbidden,
    eval_error,
    nonconstant_delay,
    nonpolynomial_input,
    config_syntax,
    config_semantic,
    io_error,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::no_tail_defined: return "NoTailDefined";
    case ErrorKind::grid_mismatch: return "GridMismatch";
    case ErrorKind::out_of_span: return "OutOfSpan";
    case ErrorKind::discontinuous_junction: return "DiscontinuousJunction";
    case ErrorKind::retardation_violated: return "RetardationViolated";
    case ErrorKind::advance_violated: return "AdvanceViolated";
    case ErrorKind::negative_majorant: return "NegativeMajorant";
    case ErrorKind::zero_progress: return "ZeroProgress";
    case ErrorKind::tail_gap: return "TailGap";
    case ErrorKind::no_convergence: return "NoConvergence";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::placeholder_out_of_range: return "PlaceholderOutOfRange";
    case ErrorKind::placeholder_forbidden: return "PlaceholderForbidden";
    case ErrorKind::eval_error: return "EvalError";
    case ErrorKind::nonconstant_delay: return "NonconstantDelay";
    case ErrorKind::nonpolynomial_input: return "NonpolynomialInput";
    case ErrorKind::config_syntax: return "ConfigSyntax";
    case ErrorKind::config_semantic: return "ConfigSemantic";
    case ErrorKind::io_error: return "IoError";
    }
    return "Unknown";
}

/// Base exception for every library failure.
///
/// Solver errors raised while working on a particular window carry that
/// window's span; it is attached on the way out of the continuation loop.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(message)
        , kind_(kind)
        , message_(std::move(message))
    {
        rebuild();
    }

    ErrorKind kind() const noexcept { return kind_; }

    const std::string& message() const noexcept { return message_; }

    const std::optional<std::pair<double, double>>& window() const noexcept { return window_; }

    void set_window(double t_start, double t_end)
    {
        window_ = std::make_pair(t_start, t_end);
        rebuild();
    }

    const char* what() const noexcept override { return full_.c_str(); }

private:
    void rebuild()
    {
        full_ = std::string(to_string(kind_)) + ": " + message_;
        if (window_) {
            full_ += " (window [" + std::to_string(window_->first) + ", " +
                     std::to_string(window_->second) + "])";
        }
    }

    ErrorKind kind_;
    std::string message_;
    std::optional<std::pair<double, double>> window_;
    std::string full_;
};

}  // namespace fdesolve
