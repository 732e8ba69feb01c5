#include "bse/ortho.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bse/dense_bse.hpp"

namespace bse {

namespace {

double spectral_norm(const PhiBlockMatrix& u) {
  if (u.empty()) return 0.0;
  return std::sqrt(hermitian_norm2(phi_assemble(phi_adjoint_product(u, u))));
}

}  // namespace

double hermitian_norm2(const CMatrix& h) {
  if (h.size() == 0) return 0.0;
  const CMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

OrthoLoss orthogonality_loss(const PhiBlockMatrix& u, CMetric) {
  if (u.empty()) return {};
  const CMatrix gram = c_gram(u, u).assemble();
  OrthoLoss out;
  out.loss = hermitian_norm2(gram - c_metric(u.cols()));
  const double gnorm = hermitian_norm2(gram);
  const double unorm = spectral_norm(u);
  out.growth_factor = gnorm > 0.0 ? unorm * unorm / gnorm : std::numeric_limits<double>::infinity();
  return out;
}

OrthoLoss orthogonality_loss(const PhiBlockMatrix& u, OmegaMetric metric) {
  if (u.empty()) return {};
  const CMatrix gram = omega_gram(*metric.problem, u, u).assemble();
  return {hermitian_norm2(gram - CMatrix::Identity(gram.rows(), gram.cols())), 0.0};
}

PhiBlockMatrix c_normalize_block(const PhiBlockMatrix& u, double neutral_tol) {
  if (u.cols() != 1) throw DimensionError("c_normalize_block: expected a single structured block");
  const double nx = u.x().squaredNorm();
  const double ny = u.y().squaredNorm();
  const double gamma = nx - ny;
  if (!(std::abs(gamma) > neutral_tol * (nx + ny)))
    throw BreakdownError("c_normalize_block: near C-neutral block", 0);
  const double s = 1.0 / std::sqrt(std::abs(gamma));
  if (gamma > 0.0) return {u.x() * s, u.y() * s};
  return {u.y().conjugate() * s, u.x().conjugate() * s};
}

PhiBlockMatrix c_project_against(const PhiBlockMatrix& u, const PhiBlockMatrix& basis) {
  if (basis.empty()) return u;
  if (u.rows() != basis.rows()) throw DimensionError("c_project_against: row dimension mismatch");
  const CGramPair g = c_gram(basis, u);
  // C_p (B^H C_n U) = Phi(G1, conj(G2)).
  const PhiBlockMatrix coef(g.g1, g.g2.conjugate());
  const PhiBlockMatrix proj = phi_product(basis, coef);
  return {u.x() - proj.x(), u.y() - proj.y()};
}

std::pair<PhiBlockMatrix, OrthoReport> c_orthonormalize_cgs(const PhiBlockMatrix& u, int passes,
                                                            double neutral_tol) {
  if (passes < 1 || passes > 2) throw Error("c_orthonormalize_cgs: passes must be 1 or 2");
  if (2 * u.cols() > 2 * u.rows()) throw DimensionError("c_orthonormalize_cgs: more columns than rows");
  OrthoReport report;
  report.loss_before = orthogonality_loss(u, CMetric{}).loss;

  PhiBlockMatrix out = u;
  for (int pass = 0; pass < passes; ++pass) {
    for (Index j = 0; j < out.cols(); ++j) {
      const PhiBlockMatrix orig = out.blocks(j, 1);
      PhiBlockMatrix blk = c_project_against(orig, out.blocks(0, j));
      // Projection that cancels the block down to rounding level leaves no
      // usable direction even if the remainder happens to look definite.
      const double before = orig.x().squaredNorm() + orig.y().squaredNorm();
      const double after = blk.x().squaredNorm() + blk.y().squaredNorm();
      try {
        if (!(after > neutral_tol * before)) throw BreakdownError("cancelled", j);
        blk = c_normalize_block(blk, neutral_tol);
      } catch (const BreakdownError&) {
        throw BreakdownError("c_orthonormalize_cgs: near C-neutral block " + std::to_string(j), j);
      }
      out.set_block(j, blk.x().col(0), blk.y().col(0));
    }
    ++report.passes;
  }
  const OrthoLoss after = orthogonality_loss(out, CMetric{});
  report.loss_after = after.loss;
  report.growth_factor = after.growth_factor;
  return {std::move(out), std::move(report)};
}

namespace {

// One SVQB pass. With `deflate` set, eigenpairs of the scaled Gram matrix
// below neutral_tol * largest are dropped (one block each) instead of
// signalling breakdown.
PhiBlockMatrix svqb_pass(const PhiBlockMatrix& u, double neutral_tol, bool deflate, Index& dropped) {
  const Index p = u.cols();
  if (p == 0) return u;
  const CGramPair gram = c_gram(u, u);

  // Column normalization: d_j = 1 / ||[u_X; u_Y]_j||, clamped below at u * sum.
  RVector diag(p);
  for (Index j = 0; j < p; ++j) diag(j) = u.x().col(j).squaredNorm() + u.y().col(j).squaredNorm();
  const double trace = diag.sum();
  if (!(trace > 0.0)) {
    if (deflate) {
      dropped += p;
      return PhiBlockMatrix::zeros(u.rows(), 0);
    }
    throw BreakdownError("svqb_indefinite: zero block");
  }
  RVector d(p);
  for (Index j = 0; j < p; ++j) d(j) = 1.0 / std::sqrt(std::max(diag(j), kUnitRoundoff * trace));

  PhiBlockMatrix scaled(u.x() * d.asDiagonal(), u.y() * d.asDiagonal());
  CGramPair sg{d.asDiagonal() * gram.g1 * d.asDiagonal(), d.asDiagonal() * gram.g2 * d.asDiagonal()};

  const double unorm = spectral_norm(scaled);
  StructuredSpectrum spec;
  if (deflate) {
    spec = structured_gram_eig_unchecked(sg);
    // Relative to ||U D||^2 >= 1, so an all-neutral set is not kept on noise.
    const double floor = neutral_tol * std::max(spec.lambda_plus.cwiseAbs().maxCoeff(), unorm * unorm);
    Index first = 0;
    while (first < p && !(spec.lambda_plus(first) >= floor)) ++first;
    dropped += first;
    const Index keep = p - first;
    if (keep == 0) return PhiBlockMatrix::zeros(u.rows(), 0);
    spec = {spec.lambda_plus.tail(keep), spec.eigvecs.blocks(first, keep)};
  } else {
    try {
      spec = structured_gram_eig(sg, neutral_tol);
    } catch (const BreakdownError& e) {
      throw BreakdownError(std::string("svqb_indefinite: ") + e.what());
    }
  }

  // Validity guard Delta * u < 1 with Delta ~ (1 + rho) kappa.
  const double kappa = spec.lambda_plus.maxCoeff() / spec.lambda_plus.minCoeff();
  const double rho = unorm * unorm / spec.lambda_plus.maxCoeff();
  if ((1.0 + rho) * kappa * kUnitRoundoff >= 1.0)
    throw BreakdownError("svqb_indefinite: growth factor times condition number exceeds 1/u");

  RVector inv_sqrt = spec.lambda_plus.cwiseSqrt().cwiseInverse();
  const PhiBlockMatrix coef(spec.eigvecs.x() * inv_sqrt.asDiagonal(),
                            spec.eigvecs.y() * inv_sqrt.asDiagonal());
  return phi_product(scaled, coef);
}

std::pair<PhiBlockMatrix, OrthoReport> svqb_run(const PhiBlockMatrix& u, bool reorth, double neutral_tol,
                                                bool deflate) {
  OrthoReport report;
  report.loss_before = orthogonality_loss(u, CMetric{}).loss;
  Index dropped = 0;
  PhiBlockMatrix out = svqb_pass(u, neutral_tol, deflate, dropped);
  report.passes = 1;
  if (reorth) {
    out = svqb_pass(out, neutral_tol, deflate, dropped);
    report.passes = 2;
  }
  const OrthoLoss after = orthogonality_loss(out, CMetric{});
  report.loss_after = after.loss;
  report.growth_factor = after.growth_factor;
  report.dropped = dropped;
  return {std::move(out), std::move(report)};
}

}  // namespace

std::pair<PhiBlockMatrix, OrthoReport> svqb_indefinite(const PhiBlockMatrix& u, bool reorth,
                                                       double neutral_tol) {
  return svqb_run(u, reorth, neutral_tol, false);
}

std::pair<PhiBlockMatrix, OrthoReport> svqb_deflating(const PhiBlockMatrix& u, bool reorth,
                                                      double neutral_tol) {
  return svqb_run(u, reorth, neutral_tol, true);
}

namespace {

// Two-pass structured Gram-Schmidt in the Omega inner product. With
// `drop_tol` > 0 a block whose Omega-norm collapses below drop_tol times its
// norm before projection, or whose two columns become nearly parallel, is
// dropped; otherwise such a block raises Error.
PhiBlockMatrix omega_gs(const BSHProblem& p, const PhiBlockMatrix& u, const PhiBlockMatrix& fixed,
                        double drop_tol, Index& dropped) {
  PhiBlockMatrix cur = u;
  for (int pass = 0; pass < 2; ++pass) {
    PhiBlockMatrix out = PhiBlockMatrix::zeros(u.rows(), 0);
    for (Index j = 0; j < cur.cols(); ++j) {
      PhiBlockMatrix blk = cur.blocks(j, 1);
      PhiBlockMatrix wb = p.apply(blk);
      const double before = std::real((blk.x().adjoint() * wb.x() + blk.y().adjoint() * wb.y())(0, 0));

      const PhiBlockMatrix prev = PhiBlockMatrix::hcat({&fixed, &out});
      if (!prev.empty()) {
        // blk <- blk - prev (prev^H Omega blk); the coefficient is Phi-shaped.
        const PhiBlockMatrix proj = phi_product(prev, phi_adjoint_product(prev, wb));
        blk = PhiBlockMatrix(blk.x() - proj.x(), blk.y() - proj.y());
        wb = p.apply(blk);
      }

      // Joint symmetric orthonormalization of the block's two columns a = [x; y]
      // and b = [conj(y); conj(x)] with Gram [alpha gamma; conj(gamma) alpha].
      const double alpha = std::real((blk.x().adjoint() * wb.x() + blk.y().adjoint() * wb.y())(0, 0));
      const cplx gamma = (blk.x().adjoint() * wb.y().conjugate() + blk.y().adjoint() * wb.x().conjugate())(0, 0);
      const double g = std::abs(gamma);
      const double floor = drop_tol > 0.0 ? drop_tol : 1e-14;
      const bool collapsed = !(alpha > floor * floor * before) || !(alpha - g > floor * alpha) || !std::isfinite(alpha);
      if (collapsed) {
        if (drop_tol > 0.0) {
          ++dropped;
          continue;
        }
        throw Error("omega_orthonormalize: block " + std::to_string(j) + " has zero Omega-norm");
      }
      const double fp = 1.0 / std::sqrt(alpha + g);
      const double fm = 1.0 / std::sqrt(alpha - g);
      const double c0 = 0.5 * (fp + fm);
      const double c1 = 0.5 * (fp - fm);
      const cplx mix = g > 0.0 ? c1 * std::conj(gamma / g) : cplx(0.0);
      const PhiBlockMatrix nb(c0 * blk.x() + mix * blk.y().conjugate(), c0 * blk.y() + mix * blk.x().conjugate());
      out = PhiBlockMatrix::hcat({&out, &nb});
    }
    cur = std::move(out);
  }
  return cur;
}

std::pair<PhiBlockMatrix, OrthoReport> omega_run(const BSHProblem& p, const PhiBlockMatrix& u,
                                                 const std::optional<PhiBlockMatrix>& against, double drop_tol) {
  if (u.rows() != p.n()) throw DimensionError("omega_orthonormalize: row dimension mismatch");
  if (against && against->rows() != p.n()) throw DimensionError("omega_orthonormalize: row dimension mismatch");
  const OmegaMetric metric{&p};
  OrthoReport report;
  report.loss_before = orthogonality_loss(u, metric).loss;
  const PhiBlockMatrix empty = PhiBlockMatrix::zeros(u.rows(), 0);
  Index dropped = 0;
  PhiBlockMatrix out = omega_gs(p, u, against ? *against : empty, drop_tol, dropped);
  report.passes = 2;
  report.dropped = dropped;
  report.loss_after = orthogonality_loss(out, metric).loss;
  return {std::move(out), std::move(report)};
}

}  // namespace

std::pair<PhiBlockMatrix, OrthoReport> omega_orthonormalize(
    const BSHProblem& p, const PhiBlockMatrix& u, const std::optional<PhiBlockMatrix>& against) {
  return omega_run(p, u, against, 0.0);
}

std::pair<PhiBlockMatrix, OrthoReport> omega_orthonormalize_deflating(
    const BSHProblem& p, const PhiBlockMatrix& u, const std::optional<PhiBlockMatrix>& against, double drop_tol) {
  if (!(drop_tol > 0.0 && drop_tol < 1.0)) throw Error("omega_orthonormalize_deflating: drop_tol must be in (0, 1)");
  return omega_run(p, u, against, drop_tol);
}

}  // namespace bse
