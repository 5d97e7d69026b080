#pragma once

#include <stdexcept>
#include <string>

namespace feast {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };       // operand dimensions disagree
struct IndexError : Error { using Error::Error; };       // row/column index out of range
struct StateError : Error { using Error::Error; };       // object misused (e.g. backward twice)
struct NumericsError : Error { using Error::Error; };    // NaN/Inf produced by an operation
struct DegenerateError : Error { using Error::Error; };  // input valid in shape but numerically void
struct SchemaError : Error { using Error::Error; };      // CSV schema does not match the file
struct ValidationError : Error { using Error::Error; };  // data values outside the declared domain
struct SamplingError : Error { using Error::Error; };    // episode constraints cannot be met
struct SelectionError : Error { using Error::Error; };   // dictionary lookup on empty/bad state
struct MetricError : Error { using Error::Error; };      // metric undefined for the given groups
struct ConfigError : Error { using Error::Error; };      // bad key, bad type, bad value
struct IoError : Error { using Error::Error; };          // file read/write failure

// Training or adaptation left the finite regime; `step` is the step that failed.
struct DivergenceError : Error {
    int step;
    DivergenceError(const std::string& msg, int step_) : Error(msg), step(step_) {}
};

}  // namespace feast
