#pragma once

#include <stdexcept>
#include <string>

namespace spk {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: validation-type errors -> 2, numeric failures -> 3, I/O -> 4.

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input fails a structural precondition (bad sizes, bad parameter values).
struct parameter_error : error {
    using error::error;
};

// Grid axis unsupported by the transform backend.
struct dimension_error : parameter_error {
    using parameter_error::parameter_error;
};

// Two operands disagree in shape or pitch.
struct shape_error : parameter_error {
    using parameter_error::parameter_error;
};

// Physical geometry impossible on the grid (e.g. particle wider than FOV).
struct geometry_error : parameter_error {
    using parameter_error::parameter_error;
};

// Value outside the mathematical domain of an operation.
struct domain_error : parameter_error {
    using parameter_error::parameter_error;
};

// Basis/measurement configuration mismatch (config-hash inequality etc).
struct config_error : parameter_error {
    using parameter_error::parameter_error;
};

// Iterative procedure produced non-finite values or failed to converge.
struct divergence_error : error {
    using error::error;
};

// Malformed or truncated on-disk artifact.
struct format_error : error {
    using error::error;
};

// Filesystem-level failure.
struct io_error : error {
    using error::error;
};

} // namespace spk
