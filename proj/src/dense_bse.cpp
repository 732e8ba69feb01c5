#include "bse/dense_bse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bse/symplectic.hpp"

namespace bse {

namespace {

// Relative gap below which two eigenvalues are treated as one cluster.
constexpr double kClusterTol = 1e-10;

// Jointly C-orthonormalize each cluster of (nearly) equal eigenvalues.
void orthonormalize_clusters(const RVector& lambda, CMatrix& x, CMatrix& y) {
  const Index k = lambda.size();
  if (k == 0) return;
  const double scale = lambda.cwiseAbs().maxCoeff();
  Index start = 0;
  while (start < k) {
    Index end = start + 1;
    while (end < k && lambda(end) - lambda(end - 1) <= kClusterTol * scale) ++end;
    const Index len = end - start;
    if (len > 1) {
      auto xc = x.middleCols(start, len);
      auto yc = y.middleCols(start, len);
      CMatrix g = xc.adjoint() * xc - yc.adjoint() * yc;
      g = 0.5 * (g + g.adjoint()).eval();
      Eigen::LLT<CMatrix> llt(g);
      if (llt.info() == Eigen::Success) {
        const CMatrix r = llt.matrixU();
        const CMatrix rinv = r.triangularView<Eigen::Upper>().solve(CMatrix::Identity(len, len));
        xc = (xc * rinv).eval();
        yc = (yc * rinv).eval();
      }
    }
    start = end;
  }
}

}  // namespace

StructuredSpectrum dense_bse_solve(const BSHProblem& p, Index dense_cap) {
  const Index n = p.n();
  if (n > dense_cap)
    throw DimensionError("dense_bse_solve: n = " + std::to_string(n) + " exceeds dense cap " +
                         std::to_string(dense_cap));
  const CMatrix omega = p.omega_dense();
  Eigen::LLT<CMatrix> llt(omega);
  if (llt.info() != Eigen::Success) throw NotDefiniteError("dense_bse_solve: Omega is not positive definite");
  const CMatrix l = llt.matrixL();

  CMatrix cl = l;
  cl.bottomRows(n) *= -1.0;
  CMatrix w = l.adjoint() * cl;
  w = 0.5 * (w + w.adjoint()).eval();

  Eigen::SelfAdjointEigenSolver<CMatrix> eig(w);
  if (eig.info() != Eigen::Success) throw Error("dense_bse_solve: Hermitian eigensolver failed");
  const RVector& mu = eig.eigenvalues();
  // Definite problems have exactly n positive eigenvalues, the top half.
  if (mu(n) <= 0.0) throw NotDefiniteError("dense_bse_solve: spectrum is not split into +/- pairs");

  RVector lambda = mu.tail(n);
  // z = C_n L v / sqrt(mu) has z^H C_n z = 1.
  CMatrix z = cl * eig.eigenvectors().rightCols(n);
  for (Index j = 0; j < n; ++j) z.col(j) /= std::sqrt(lambda(j));
  CMatrix x = z.topRows(n);
  CMatrix y = z.bottomRows(n);
  orthonormalize_clusters(lambda, x, y);

  PhiBlockMatrix vecs(std::move(x), std::move(y));
  const PhiBlockMatrix ov = p.apply(vecs);
  const double omega_scale = omega.norm();
  for (Index j = 0; j < n; ++j) {
    const double res = std::sqrt((ov.x().col(j) - vecs.x().col(j) * lambda(j)).squaredNorm() +
                                 (ov.y().col(j) + vecs.y().col(j) * lambda(j)).squaredNorm());
    const double znorm = std::sqrt(vecs.x().col(j).squaredNorm() + vecs.y().col(j).squaredNorm());
    if (!(res <= 1e-8 * (omega_scale + lambda(j)) * znorm))
      throw Error("dense_bse_solve: eigen-residual check failed for pair " + std::to_string(j));
  }
  return {std::move(lambda), std::move(vecs)};
}

namespace {

struct GramEig {
  RVector sigma;  // all 2p eigenvalues, ascending
  CMatrix vecs;
};

GramEig hermitian_gram_eig(const CGramPair& m) {
  CMatrix full = m.assemble();
  full = 0.5 * (full + full.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(full);
  if (eig.info() != Eigen::Success) throw BreakdownError("structured_gram_eig: eigensolver failed");
  return {eig.eigenvalues(), eig.eigenvectors()};
}

StructuredSpectrum positive_half(const GramEig& e, Index p) {
  RVector plus = e.sigma.tail(p);
  CMatrix f = e.vecs.rightCols(p);

  // Re-orthonormalize within clusters so the swap-conjugate partners stay exact.
  const double scale = plus.cwiseAbs().maxCoeff();
  Index start = 0;
  while (start < p) {
    Index end = start + 1;
    while (end < p && plus(end) - plus(end - 1) <= kClusterTol * scale) ++end;
    if (end - start > 1) {
      Eigen::HouseholderQR<CMatrix> qr(f.middleCols(start, end - start));
      f.middleCols(start, end - start) = qr.householderQ() * CMatrix::Identity(2 * p, end - start);
    }
    start = end;
  }
  return {std::move(plus), PhiBlockMatrix(f.topRows(p), f.bottomRows(p))};
}

}  // namespace

StructuredSpectrum structured_gram_eig(const CGramPair& m, double singular_tol) {
  const Index p = m.size();
  const GramEig e = hermitian_gram_eig(m);
  const double largest = e.sigma.cwiseAbs().maxCoeff();
  const double smallest = e.sigma.cwiseAbs().minCoeff();
  if (!(largest > 0.0) || smallest < singular_tol * largest)
    throw BreakdownError("structured_gram_eig: Gram matrix is (nearly) singular");
  if (e.sigma(p - 1) >= 0.0 || e.sigma(p) <= 0.0)
    throw BreakdownError("structured_gram_eig: inertia is not balanced");
  return positive_half(e, p);
}

StructuredSpectrum structured_gram_eig_unchecked(const CGramPair& m) {
  return positive_half(hermitian_gram_eig(m), m.size());
}

WilliamsonResult williamson_dense(const RMatrix& m, Index dense_cap) {
  const BSHProblem p = spd_to_bsh(m);
  StructuredSpectrum spec;
  try {
    spec = dense_bse_solve(p, dense_cap);
  } catch (const NotDefiniteError&) {
    throw NotDefiniteError("williamson_dense: M is not positive definite");
  }
  const SymplecticBlock block = symplectic_from_phi(spec.eigvecs);
  if (block.imag_residue > 1e-9 * std::max(1.0, block.s.norm()))
    throw Error("williamson_dense: imaginary residue of S too large");
  return {std::move(spec.lambda_plus), block.s};
}

}  // namespace bse
