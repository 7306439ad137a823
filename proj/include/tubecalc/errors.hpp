#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tubecalc {

/// Base error carrying a stable machine-readable code used by the CLI to
/// fill the "error" field of JSON reports and to pick the exit status.
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

  private:
    std::string code_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error("parse", what) {}
};

struct NonConvergedProjection : Error {
    explicit NonConvergedProjection(const std::string& what)
        : Error("non_converged_projection", what) {}
};

struct GridTooLarge : Error {
    explicit GridTooLarge(const std::string& what) : Error("grid_too_large", what) {}
};

struct DegenerateNormal : Error {
    explicit DegenerateNormal(const std::string& what) : Error("degenerate_normal", what) {}
};

struct DegenerateExtrusion : Error {
    explicit DegenerateExtrusion(const std::string& what)
        : Error("degenerate_extrusion", what) {}
};

struct TubeOverlapsMedialAxis : Error {
    explicit TubeOverlapsMedialAxis(const std::string& what)
        : Error("tube_overlaps_medial_axis", what) {}
};

struct SpacingTooCoarse : Error {
    explicit SpacingTooCoarse(const std::string& what) : Error("spacing_too_coarse", what) {}
};

struct AmbiguousNormalEigenvalue : Error {
    explicit AmbiguousNormalEigenvalue(const std::string& what)
        : Error("ambiguous_normal_eigenvalue", what) {}
};

struct NoConvergence : Error {
    NoConvergence(const std::string& what, int iters)
        : Error("no_convergence", what), iterations(iters) {}
    int iterations;
};

struct SingularWithoutRegularization : Error {
    explicit SingularWithoutRegularization(const std::string& what)
        : Error("singular_without_regularization", what) {}
};

struct InsufficientInteriorStencil : Error {
    explicit InsufficientInteriorStencil(const std::string& what)
        : Error("insufficient_interior_stencil", what) {}
};

struct ProjectionNotInjective : Error {
    explicit ProjectionNotInjective(const std::string& what)
        : Error("projection_not_injective", what) {}
};

/// A numerically verified property failed; carries the property name so
/// reports can say which check was violated.
struct AssertionFailure : Error {
    AssertionFailure(std::string property_, const std::string& what)
        : Error("assertion_failure", what), property(std::move(property_)) {}
    std::string property;
};

}  // namespace tubecalc
