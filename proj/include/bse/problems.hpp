#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bse/lobpcg.hpp"
#include "bse/structured.hpp"

namespace bse {

/// A test problem: either a BSH problem or a real symmetric positive definite
/// matrix, with known eigenvalues when the construction provides them.
struct GeneratedProblem {
  std::variant<BSHProblem, RMatrix> problem;
  std::optional<RVector> ground_truth;  // ascending
  std::string provenance;

  bool is_bsh() const noexcept { return std::holds_alternative<BSHProblem>(problem); }
  const BSHProblem& bsh() const;
  const RMatrix& spd() const;
};

/// A = H_r + (||H_r||_inf + ||B_r||_inf + diag_shift) I with H_r Hermitian and
/// B = B_r complex symmetric, entries N(0, 1)/sqrt(n). Omega is strictly
/// diagonally dominant, hence positive definite.
GeneratedProblem gen_random_definite_bsh(Index n, std::uint64_t seed, double diag_shift = 1.0);

/// M = Q diag(D, D) Q^T with D = diag(1..n) and Q = K L symplectic, so the
/// symplectic eigenvalues of M are exactly 1..n. K is orthosymplectic from a
/// seeded random unitary; L is a symplectic shear at index n/5 with
/// parameters 1.2 and -sqrt(n/5). Requires n >= 5.
GeneratedProblem gen_known_spectrum_spd(Index n, std::uint64_t seed);

/// The two factors of the known-spectrum generator, exposed for checks.
RMatrix orthosymplectic_from_unitary(const CMatrix& u);
RMatrix symplectic_shear(Index n, Index j, double nu, double c);

// ---------------------------------------------------------------------------
// Matrix Market

enum class MarketFormat { Array, Coordinate };
enum class MarketField { Real, Complex, Integer, Pattern };
enum class MarketSymmetry { General, Symmetric, Hermitian, SkewSymmetric };

/// A dense view of a Matrix Market file; symmetric storage is expanded.
struct MarketMatrix {
  CMatrix values;
  MarketFormat format = MarketFormat::Array;
  MarketField field = MarketField::Real;
  MarketSymmetry symmetry = MarketSymmetry::General;
  std::vector<std::string> comments;  // without the leading '%'
};

/// Throws ParseError (with the 1-based line number) on malformed input and
/// Error if the file cannot be opened.
MarketMatrix read_matrix_market(const std::string& path);
MarketMatrix parse_matrix_market(const std::string& text);

/// Writes `m.values` in `m.format`/`m.field`/`m.symmetry`, with `m.comments`
/// as comment lines after the header. Values are printed with 17 significant
/// digits. Only the lower triangle is written for the symmetric kinds.
void write_matrix_market(const std::string& path, const MarketMatrix& m);
std::string format_matrix_market(const MarketMatrix& m);

enum class ProblemKind { Bsh, Spd };

/// kind Spd: one real symmetric file of even dimension. kind Bsh: A (Hermitian)
/// and B (complex symmetric) files. Symmetry markers must match the role.
GeneratedProblem load_matrix_market(const std::string& path_a, const std::optional<std::string>& path_b,
                                    ProblemKind kind);

/// Diagonal preconditioner factors from the problem's diagonal.
Preconditioner build_preconditioner(const BSHProblem& p, PreconditionerKind kind);

}  // namespace bse
