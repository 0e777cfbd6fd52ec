#pragma once

#include <stdexcept>
#include <string>

namespace clf {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Adaptive step requested on a zero feature vector.
class DegenerateSample : public Error {
public:
  using Error::Error;
};

/// Gram matrix of a min-norm update is singular or too ill-conditioned.
class RankDeficiency : public Error {
public:
  using Error::Error;
};

/// The requested evaluation route does not cover this model
/// (distinct task optima, rotated bases, multi-epoch runs, ...).
class UnsupportedModel : public Error {
public:
  using Error::Error;
};

/// A theorem precondition such as eta <= 1/R^2 is violated.
class AssumptionViolation : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

namespace detail {

template <class E>
inline void require(bool ok, const std::string& what) {
  if (!ok) throw E(what);
}

}  // namespace detail
}  // namespace clf
