#pragma once

#include "bse/structured.hpp"

namespace bse {

/// Positive half of a structured spectral decomposition. `eigvecs` holds
/// Phi(X, Y); the negative partners are its second block half by construction.
struct StructuredSpectrum {
  RVector lambda_plus;  // ascending
  PhiBlockMatrix eigvecs;
};

/// Full structured decomposition H = Phi(X,Y) C_n Phi(Lambda,0) Phi(X,-Y)^H of a
/// definite BSH matrix, via Omega = L L^H and the Hermitian eigenproblem of
/// L^H C_n L. Eigenvectors are C_n-normalized (Phi^H C_n Phi = C_n).
///
/// Throws DimensionError above `dense_cap`, NotDefiniteError when the Cholesky
/// factorization fails, and Error when the eigen-residual check fails.
StructuredSpectrum dense_bse_solve(const BSHProblem& p, Index dense_cap = kDefaultDenseCap);

/// Structured eigendecomposition M = F C_p Phi(Sigma_+, 0) F^H of a C-Gram matrix,
/// with F = Phi(F_X, F_Y) unitary. `lambda_plus` holds Sigma_+ ascending.
/// Throws BreakdownError when the smallest |eigenvalue| is below
/// `singular_tol` times the largest, or when the +/- inertia is not balanced.
StructuredSpectrum structured_gram_eig(const CGramPair& m, double singular_tol = kDefaultNeutralTol);

/// The same decomposition without the singularity and inertia checks; the
/// returned half holds the p largest eigenvalues, however small.
StructuredSpectrum structured_gram_eig_unchecked(const CGramPair& m);

struct WilliamsonResult {
  RVector lambda;    // ascending, length n
  RMatrix s_matrix;  // 2n x 2n symplectic, S^T M S = diag(Lambda, Lambda)
};

/// Williamson normal form of a real symmetric positive definite 2n x 2n matrix,
/// computed through the BSE equivalence.
WilliamsonResult williamson_dense(const RMatrix& m, Index dense_cap = kDefaultDenseCap);

}  // namespace bse
