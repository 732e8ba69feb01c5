#pragma once

#include "bse/lobpcg.hpp"
#include "bse/structured.hpp"

namespace bse {

/// Symplectic eigenpairs of a real symmetric positive definite M.
struct SymplecticResult {
  RVector lambda;   // l smallest symplectic eigenvalues, ascending
  RMatrix s_block;  // 2n x 2l: [s_1 .. s_l, partners s_{n+1} .. s_{n+l}]
  double j_residual = 0.0;      // ||S^T J_n S - J_l||_max
  double diag_residual = 0.0;   // ||S^T M S - diag(Lambda, Lambda)||_max
  double trace_residual = 0.0;  // |trace(S^T M S) - 2 sum(lambda)| / (2 sum(lambda))
  double imag_residue = 0.0;
  Solution solution;            // underlying BSE solve (history, convergence)
};

/// Real form of assembled C_n-normalized eigenvectors, S = Re(Q_n^H Z Q_l),
/// evaluated blockwise without forming Q_n.
struct SymplecticBlock {
  RMatrix s;
  double imag_residue = 0.0;  // max |Im(Q_n^H Z Q_l)|
};

/// A = (M11 + M22)/2 + i(M12 - M21)/2, B = (M11 - M22)/2 - i(M12 + M21)/2,
/// so that Q_n^H Omega Q_n = M. Throws SymmetryError for non-symmetric M and
/// DimensionError for odd or non-square M.
BSHProblem spd_to_bsh(const RMatrix& m);

/// S = Re(Q_n^H Phi(X, Y) Q_l) with the sign and scale convention: the
/// largest-magnitude entry of s_i is positive and s_i^T J s_{l+i} = 1.
SymplecticBlock symplectic_from_phi(const PhiBlockMatrix& z);

/// Runs the adaptive BSE solver on spd_to_bsh(M) and maps the eigenvectors
/// back to real symplectic form. Non-convergence is reported through
/// `solution.converged`; a large imaginary residue throws Error.
SymplecticResult symplectic_eigensolve(const RMatrix& m, Index l, const SolverConfig& cfg,
                                       const Preconditioner& t = Preconditioner::identity());
/// Same, with the preconditioner built from the derived BSH problem.
SymplecticResult symplectic_eigensolve(const RMatrix& m, Index l, const SolverConfig& cfg,
                                       PreconditionerKind kind);

/// |trace(Z^H Omega Z) - 2 sum(theta)| for a C_n-orthonormal Z, where theta
/// are the Ritz values of span(Z).
double trace_min_check(const BSHProblem& p, const PhiBlockMatrix& z);

}  // namespace bse
