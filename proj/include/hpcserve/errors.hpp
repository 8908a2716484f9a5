#pragma once

#include <stdexcept>
#include <string>

namespace hpcserve {

// Base for everything thrown by this library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller input: out-of-range argument, malformed request, broken precondition.
struct validation_error : error {
    using error::error;
};

// Malformed text input. line is 1-based, 0 when no line applies.
struct parse_error : error {
    int line;
    parse_error(const std::string& msg, int line_no = 0)
        : error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
};

// Lookup by id/name failed.
struct not_found_error : error {
    using error::error;
};

// Request can never be satisfied by the cluster, regardless of load.
struct infeasible_error : error {
    using error::error;
};

// Operation exists but is not supported for this target (e.g. model without perf constants).
struct unsupported_error : error {
    using error::error;
};

// Admission queue is full.
struct overloaded_error : error {
    using error::error;
};

// No endpoint can take the request and queueing is disabled (or everything went down).
struct unavailable_error : error {
    using error::error;
};

// Duplicate key where uniqueness is required.
struct duplicate_error : error {
    using error::error;
};

}  // namespace hpcserve
