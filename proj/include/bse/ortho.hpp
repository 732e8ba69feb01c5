#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "bse/structured.hpp"

namespace bse {

/// Diagnostics of one orthonormalization call.
struct OrthoReport {
  double loss_before = 0.0;  // ||U^H G U - I_G||_2 of the input
  double loss_after = 0.0;   // same for the output
  double growth_factor = 0.0;  // rho_U = ||U||_2^2 / ||U^H C_n U||_2 of the output
  int passes = 0;
  std::vector<Index> breakdown_blocks;
  Index dropped = 0;  // blocks removed by a deflating variant
  bool fallback_used = false;
};

/// Metric selector for `orthogonality_loss`.
struct CMetric {};
struct OmegaMetric {
  const BSHProblem* problem;
};

struct OrthoLoss {
  double loss = 0.0;
  double growth_factor = 0.0;  // C metric only; 0 for Omega
};

/// Loss of orthogonality ||U^H C_n U - C_p||_2 and growth factor rho_U.
OrthoLoss orthogonality_loss(const PhiBlockMatrix& u, CMetric);
/// Loss of orthogonality ||U^H Omega U - I||_2.
OrthoLoss orthogonality_loss(const PhiBlockMatrix& u, OmegaMetric metric);

/// Normalize one structured block (n x 1 generators) to C-norm one.
/// When gamma = ||u_X||^2 - ||u_Y||^2 < 0 the roles are swapped,
/// (u_X, u_Y) <- (conj(u_Y), conj(u_X)), which keeps the block's span.
/// Throws BreakdownError(block 0) if |gamma| < neutral_tol (||u_X||^2 + ||u_Y||^2).
PhiBlockMatrix c_normalize_block(const PhiBlockMatrix& u, double neutral_tol = kDefaultNeutralTol);

/// U - B C_p (B^H C_n U) for a C_n-orthonormal basis B.
PhiBlockMatrix c_project_against(const PhiBlockMatrix& u, const PhiBlockMatrix& basis);

/// Block classical Gram-Schmidt in the C_n inner product; passes = 2 gives CGS2.
/// Breakdown carries the offending block index.
std::pair<PhiBlockMatrix, OrthoReport> c_orthonormalize_cgs(const PhiBlockMatrix& u, int passes = 2,
                                                            double neutral_tol = kDefaultNeutralTol);

/// Indefinite SVQB: diagonal scaling, structured eigendecomposition of the
/// C-Gram matrix, U <- U F Sigma_+^{-1/2}; repeated once when `reorth` is set.
std::pair<PhiBlockMatrix, OrthoReport> svqb_indefinite(const PhiBlockMatrix& u, bool reorth = true,
                                                       double neutral_tol = kDefaultNeutralTol);

/// SVQB that drops near-singular directions instead of signalling
/// breakdown: eigenpairs of the scaled C-Gram matrix below neutral_tol times
/// the largest are discarded, one block each, so the output may have fewer
/// blocks (possibly none). Spans a C-orthonormal basis of the well
/// conditioned part of span(U).
std::pair<PhiBlockMatrix, OrthoReport> svqb_deflating(const PhiBlockMatrix& u, bool reorth = true,
                                                      double neutral_tol = kDefaultNeutralTol);

/// Structured Gram-Schmidt (two passes) in the Omega inner product. Each
/// block is projected against `against` and the previous blocks, then its two
/// columns are orthonormalized jointly by the structure-preserving symmetric
/// 2x2 step. Throws Error on a zero Omega-norm block.
std::pair<PhiBlockMatrix, OrthoReport> omega_orthonormalize(
    const BSHProblem& p, const PhiBlockMatrix& u,
    const std::optional<PhiBlockMatrix>& against = std::nullopt);

/// As omega_orthonormalize, but a block whose Omega-norm falls below
/// drop_tol times its norm before projection (or whose two columns become
/// nearly parallel) is dropped; `OrthoReport::dropped` counts them.
std::pair<PhiBlockMatrix, OrthoReport> omega_orthonormalize_deflating(
    const BSHProblem& p, const PhiBlockMatrix& u, const std::optional<PhiBlockMatrix>& against = std::nullopt,
    double drop_tol = 1e-10);

/// Spectral norm of a Hermitian matrix.
double hermitian_norm2(const CMatrix& h);

}  // namespace bse
