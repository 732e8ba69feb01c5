#include "bse/ihl.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bse/dense_bse.hpp"
#include "bse/ortho.hpp"

namespace bse {

namespace {

double c_gram_distance(const PhiBlockMatrix& u) {
  const CGramPair g = c_gram(u, u);
  const Index k = u.cols();
  return std::max((g.g1 - CMatrix::Identity(k, k)).cwiseAbs().maxCoeff(), g.g2.cwiseAbs().maxCoeff());
}

double omega_gram_distance(const BSHProblem& p, const PhiBlockMatrix& u) {
  const PhiGramPair g = omega_gram(p, u, u);
  const Index k = u.cols();
  return std::max((g.k1 - CMatrix::Identity(k, k)).cwiseAbs().maxCoeff(), g.k2.cwiseAbs().maxCoeff());
}

double max_abs_or_zero(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// C-orthonormal basis of `target` blocks built block by block: the blocks of
// N first, then coordinate blocks Phi(e_i, 0). A candidate is skipped when
// little is left after projection or the remainder is near neutral.
PhiBlockMatrix complete_c_basis(const PhiBlockMatrix& n, Index target, double neutral_tol) {
  PhiBlockMatrix out = PhiBlockMatrix::zeros(n.rows(), 0);
  auto try_add = [&](const PhiBlockMatrix& cand) {
    const double before = cand.x().squaredNorm() + cand.y().squaredNorm();
    if (!(before > 0.0)) return;
    PhiBlockMatrix b = c_project_against(c_project_against(cand, out), out);
    if (!(b.x().squaredNorm() + b.y().squaredNorm() > neutral_tol * before)) return;
    try {
      b = c_normalize_block(b, neutral_tol);
    } catch (const BreakdownError&) {
      return;
    }
    out = PhiBlockMatrix::hcat({&out, &b});
  };
  for (Index j = 0; j < n.cols() && out.cols() < target; ++j) try_add(n.blocks(j, 1));
  for (Index i = 0; i < n.rows() && out.cols() < target; ++i) {
    CMatrix e = CMatrix::Zero(n.rows(), 1);
    e(i, 0) = 1.0;
    try_add(PhiBlockMatrix(e, CMatrix::Zero(n.rows(), 1)));
  }
  return out;
}

}  // namespace

RitzOutput rayleigh_ritz(const BSHProblem& p, const PhiBlockMatrix& u, Index dense_cap) {
  PhiGramPair k = omega_gram(p, u, u);
  k.k1 = 0.5 * (k.k1 + k.k1.adjoint()).eval();
  k.k2 = 0.5 * (k.k2 + k.k2.transpose()).eval();
  const BSHProblem small(std::move(k.k1), std::move(k.k2), false);
  StructuredSpectrum spec;
  try {
    spec = dense_bse_solve(small, dense_cap);
  } catch (const NotDefiniteError&) {
    throw NotDefiniteError("rayleigh_ritz: projected Omega is not positive definite");
  }
  return {std::move(spec.lambda_plus), std::move(spec.eigvecs), c_gram_distance(u)};
}

RitzOutput rayleigh_ritz_omega(const PhiBlockMatrix& u) {
  const Index m = u.cols();
  // Singular values of U^H C_n U are 1/theta; a large spread is expected here.
  const StructuredSpectrum spec = structured_gram_eig(c_gram(u, u), 1e-15);
  RitzOutput out;
  out.theta_plus.resize(m);
  CMatrix vx(m, m), vy(m, m);
  // mu ascending -> theta = 1/mu descending; reverse so theta is ascending.
  for (Index j = 0; j < m; ++j) {
    const Index src = m - 1 - j;
    out.theta_plus(j) = 1.0 / spec.lambda_plus(src);
    vx.col(j) = spec.eigvecs.x().col(src);
    vy.col(j) = spec.eigvecs.y().col(src);
  }
  out.v_matrix = PhiBlockMatrix(std::move(vx), std::move(vy));
  return out;
}

IhlBases ihl_update_c(const PhiBlockMatrix& u, const RitzOutput& r, Index k, double neutral_tol) {
  const Index m = u.cols();
  if (r.v_matrix.cols() != m || r.v_matrix.rows() != m)
    throw DimensionError("ihl_update_c: Ritz factor does not match the basis");
  if (k < 1 || k > m) throw DimensionError("ihl_update_c: need 1 <= k <= m");

  const PhiBlockMatrix v1 = r.v_matrix.blocks(0, k);
  const PhiBlockMatrix v2 = r.v_matrix.blocks(k, m - k);
  const CMatrix v12x = v2.x().topRows(k);
  const CMatrix v12y = v2.y().topRows(k);
  const PhiBlockMatrix n(v12x.adjoint(), -v12y.transpose());

  IhlBases out;
  try {
    out.q = svqb_indefinite(n, true, neutral_tol).first;
  } catch (const BreakdownError&) {
    out.q = complete_c_basis(n, std::min(k, m - k), neutral_tol);
    out.completed = true;
  }
  out.z = phi_product(u, v1);
  out.p = phi_product(u, phi_product(v2, out.q));
  return out;
}

IhlBases ihl_update_omega(const BSHProblem& p, const PhiBlockMatrix& u, const RitzOutput& r, Index k) {
  const Index m = u.cols();
  if (r.v_matrix.cols() != m || r.v_matrix.rows() != m)
    throw DimensionError("ihl_update_omega: Ritz factor does not match the basis");
  if (k < 1 || k >= m) throw DimensionError("ihl_update_omega: need 1 <= k < m");

  const PhiBlockMatrix v1 = r.v_matrix.blocks(0, k);
  const PhiBlockMatrix v2 = r.v_matrix.blocks(k, m - k);
  const CMatrix v12x = v2.x().topRows(k);
  const CMatrix v12y = v2.y().topRows(k);
  const PhiBlockMatrix n(v12x.adjoint(), v12y.transpose());

  // Induced metric V_2^H (U^H Omega U) V_2 and the factor in real form.
  const PhiBlockMatrix ugram = omega_gram(p, u, u).as_phi();
  const PhiBlockMatrix induced = phi_adjoint_product(v2, phi_product(ugram, v2));
  RMatrix g = phi_to_real(induced);
  g = 0.5 * (g + g.transpose()).eval();
  const RMatrix nr = phi_to_real(n);

  // Householder QR keeps full column rank even when N loses rank; P has
  // min(k, m - k) blocks.
  Eigen::HouseholderQR<RMatrix> qr(nr);
  const RMatrix q0 = qr.householderQ() * RMatrix::Identity(nr.rows(), std::min(nr.rows(), nr.cols()));
  RMatrix h = q0.transpose() * g * q0;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::LLT<RMatrix> llt(h);
  if (llt.info() != Eigen::Success) throw Error("ihl_update_omega: induced metric is not positive definite");
  const RMatrix rinv = llt.matrixU().solve(RMatrix::Identity(h.rows(), h.cols()));

  IhlBases out;
  out.q = real_to_phi(q0 * rinv);
  out.z = phi_product(u, v1);
  out.p = phi_product(u, phi_product(v2, out.q));
  return out;
}

ReorthCheck selective_reorth_needed(const IhlBases& bases, std::uint64_t seed, double tau0, double res_norm) {
  const PhiBlockMatrix zp = PhiBlockMatrix::hcat({&bases.z, &bases.p});
  const Index k2 = zp.cols();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CVector g(k2);
  for (Index i = 0; i < k2; ++i) g(i) = normal(rng);

  const CVector a = zp.x() * g;
  const CVector b = zp.y() * g;
  const CVector e1 = zp.x().adjoint() * a - zp.y().adjoint() * b - g;
  const CVector e2 = zp.y().transpose() * a - zp.x().transpose() * b;

  ReorthCheck out;
  out.measured = e1.cwiseAbs().maxCoeff() + e2.cwiseAbs().maxCoeff();
  out.threshold = std::min(tau0, 0.1 * res_norm);
  out.needed = !(out.measured < out.threshold);
  return out;
}

void reorthogonalize(IhlBases& bases, double neutral_tol) {
  const Index k = bases.z.cols();
  const PhiBlockMatrix zp = PhiBlockMatrix::hcat({&bases.z, &bases.p});
  const PhiBlockMatrix fixed = c_orthonormalize_cgs(zp, 2, neutral_tol).first;
  bases.z = fixed.blocks(0, k);
  bases.p = fixed.blocks(k, fixed.cols() - k);
}

IhlInvariants measure_ihl_c(const IhlBases& bases) {
  IhlInvariants out;
  out.zz = c_gram_distance(bases.z);
  out.pp = c_gram_distance(bases.p);
  const CGramPair pz = c_gram(bases.p, bases.z);
  out.pz = std::max(max_abs_or_zero(pz.g1), max_abs_or_zero(pz.g2));
  return out;
}

IhlInvariants measure_ihl_omega(const BSHProblem& p, const IhlBases& bases) {
  IhlInvariants out;
  out.zz = omega_gram_distance(p, bases.z);
  out.pp = omega_gram_distance(p, bases.p);
  const PhiGramPair pz = omega_gram(p, bases.p, bases.z);
  out.pz = std::max(max_abs_or_zero(pz.k1), max_abs_or_zero(pz.k2));
  return out;
}

}  // namespace bse
