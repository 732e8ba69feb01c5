#pragma once

#include <cstdint>

#include "bse/structured.hpp"

namespace bse {

/// Ritz pairs of a search subspace. `v_matrix` is Phi(V_X, V_Y), m x m
/// generators for a basis of m blocks; the first block half belongs to the
/// positive Ritz values `theta_plus` (ascending).
struct RitzOutput {
  RVector theta_plus;
  PhiBlockMatrix v_matrix;
  /// max-norm distance of the input basis from orthonormality in the metric used.
  double basis_loss = 0.0;
};

/// New approximate eigenvectors Z, the companion block P and the small
/// orthonormal factor Q they were built from.
struct IhlBases {
  PhiBlockMatrix z;
  PhiBlockMatrix p;
  PhiBlockMatrix q;
  /// span{Z_new, Z_old} lost dimension and Q was completed block by block.
  bool completed = false;
};

/// Rayleigh-Ritz for the pencil (Omega, C_n) on a C_n-orthonormal basis U:
/// solves U^H Omega U V = C V diag(Theta_+, -Theta_+) with the dense
/// structured solver. Throws NotDefiniteError if the projection is not definite.
RitzOutput rayleigh_ritz(const BSHProblem& p, const PhiBlockMatrix& u, Index dense_cap = kDefaultDenseCap);

/// Rayleigh-Ritz on an Omega-orthonormal basis: the eigenvalues mu of
/// U^H C_n U are the reciprocals of the Ritz values, and V is unitary so the
/// Ritz vectors U V stay Omega-orthonormal.
RitzOutput rayleigh_ritz_omega(const PhiBlockMatrix& u);

/// Structured IHL update in the C_n inner product. The companion factor is
/// obtained by indefinite SVQB on Phi(V_X12^H, -V_Y12^T); if that breaks
/// down Q is completed block by block, so P keeps min(k, m - k) blocks.
IhlBases ihl_update_c(const PhiBlockMatrix& u, const RitzOutput& r, Index k,
                      double neutral_tol = kDefaultNeutralTol);

/// Structured IHL update in the Omega inner product. The small factor
/// Phi(V_X12^H, V_Y12^T) is orthonormalized in the induced metric
/// V_2^H (U^H Omega U) V_2 through its real form.
IhlBases ihl_update_omega(const BSHProblem& p, const PhiBlockMatrix& u, const RitzOutput& r, Index k);

struct ReorthCheck {
  bool needed = false;
  double measured = 0.0;   // ||E1 g||_inf + ||E2 g||_inf
  double threshold = 0.0;  // min(tau0, res_norm / 10)
};

/// Randomized probe of the C_n-orthogonality of [Z, P] with one real Gaussian
/// trial vector g of length 2k.
ReorthCheck selective_reorth_needed(const IhlBases& bases, std::uint64_t seed, double tau0, double res_norm);

/// CGS2 over [Z, P]: Z among itself, then P against Z and within P.
void reorthogonalize(IhlBases& bases, double neutral_tol = kDefaultNeutralTol);

/// The three post-state quantities of an IHL update, in max norm:
/// ||Z^H G Z - I_G||, ||P^H G P - I_G||, ||P^H G Z|| for G = C_n or Omega.
struct IhlInvariants {
  double zz = 0.0;
  double pp = 0.0;
  double pz = 0.0;
};
IhlInvariants measure_ihl_c(const IhlBases& bases);
IhlInvariants measure_ihl_omega(const BSHProblem& p, const IhlBases& bases);

}  // namespace bse
