#pragma once

#include <stdexcept>
#include <string>

namespace prodspec {

// Structured error codes. Every failure surfaced by the library carries one of
// these so that callers (and the CLI's machine-readable diagnostics) can react
// to the condition instead of parsing message text.
enum class Errc {
    dimension_mismatch,
    empty_model,
    non_positive_scale,
    non_integer_dimension,
    pole_hit,
    branch_loss,
    branch_collision,
    continuation_stall,
    no_real_root,
    no_upper_branch,
    support_edge_ambiguity,
    eigen_solver_failure,
    degenerate_state,
    fit_diverged,
    insufficient_window,
    not_applicable,
    parse_error,
    usage_error,
    io_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const { return code_; }
    const char* code_name() const { return errc_name(code_); }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
    throw Error(code, what);
}

} // namespace prodspec
