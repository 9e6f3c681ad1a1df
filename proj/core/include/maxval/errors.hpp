#pragma once

#include <stdexcept>
#include <string>

namespace maxval {

// Base class for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments or configuration (non-finite inputs, out-of-range parameters).
struct InvalidArgument : Error {
  using Error::Error;
};

// A propensity fell below the positivity floor.
struct PositivityError : Error {
  using Error::Error;
};

// A nuisance surface produced a non-finite value when evaluated.
struct NuisanceError : Error {
  using Error::Error;
};

// A learner could not be fitted (e.g. an empty action stratum).
struct FitError : Error {
  using Error::Error;
};

// Not enough rows for the requested fold layout.
struct InsufficientData : Error {
  using Error::Error;
};

// Malformed input file (CSV / config).
struct ParseError : Error {
  using Error::Error;
};

// Structurally valid input that violates the schema (e.g. action label 0).
struct SchemaError : Error {
  using Error::Error;
};

// Numerical failure (quadrature non-convergence, singular system).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace maxval
