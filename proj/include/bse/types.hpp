#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bse {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Unit roundoff of IEEE double, u = 2^-52.
inline constexpr double kUnitRoundoff = 0x1p-52;

/// Default boundary between benign and dangerous C-normalization.
inline constexpr double kDefaultNeutralTol = 1e-10;

/// Largest n for which dense O(n^3) checks and oracles are run.
inline constexpr Index kDefaultDenseCap = 512;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

/// Omega (or a projected Omega) failed a Cholesky factorization.
class NotDefiniteError : public Error {
 public:
  using Error::Error;
};

/// Near-neutral vector or singular Gram matrix met during C-orthogonalization.
/// `block()` is the offending structured block, or -1 for whole-matrix failures.
class BreakdownError : public Error {
 public:
  BreakdownError(const std::string& what, Index block = -1)
      : Error(what), block_(block) {}
  Index block() const noexcept { return block_; }

 private:
  Index block_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bse
