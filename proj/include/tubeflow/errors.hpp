#pragma once

#include <stdexcept>
#include <string>

namespace tubeflow {

// Base class so callers can distinguish library failures from std errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Input/spec problems: bad parameters, malformed files, domain violations.
struct SpecError : Error {
  using Error::Error;
};

struct OutOfDomain : SpecError {
  using SpecError::SpecError;
};
struct RankDeficient : SpecError {
  using SpecError::SpecError;
};
struct FieldGridMismatch : SpecError {
  using SpecError::SpecError;
};
struct EmptyCloud : SpecError {
  using SpecError::SpecError;
};
struct NotBijective : SpecError {
  using SpecError::SpecError;
};

// Numerical pipeline failures.
struct NotNormal : Error {
  using Error::Error;
};
struct DegenerateMetric : Error {
  using Error::Error;
};
struct StencilOutOfDomain : Error {
  using Error::Error;
};
struct SingularMatrix : Error {
  using Error::Error;
};
struct NoValidDelta : Error {
  using Error::Error;
};
struct OutsideCertifiedBox : Error {
  using Error::Error;
};
struct NoConvergence : Error {
  using Error::Error;
};
struct OutsideTube : Error {
  using Error::Error;
};
struct SingularDE : Error {
  using Error::Error;
};

// A verification oracle reported failure where the caller required success.
struct OracleFailure : Error {
  using Error::Error;
};

}  // namespace tubeflow
