#include <doctest.h>

#include "bse/dense_bse.hpp"
#include "bse/ihl.hpp"
#include "bse/ortho.hpp"
#include "oracles.hpp"

using namespace bse;
using oracle::cplx;

namespace {

constexpr double u = kUnitRoundoff;

// C-orthonormal basis with a moderate growth factor, like the solver's bases.
PhiBlockMatrix c_basis(oracle::Rng& rng, Index n, Index m) {
  return c_orthonormalize_cgs(PhiBlockMatrix(rng.cmat(n, m), 0.3 * rng.cmat(n, m))).first;
}

double sq_norm(const PhiBlockMatrix& b) {
  const double s = oracle::spectral_norm(oracle::assemble(b));
  return s * s;
}

// ||K V - C V diag(Theta, -Theta)|| with K = U^H Omega U on the assembly.
double ritz_residual(const BSHProblem& p, const PhiBlockMatrix& basis, const RitzOutput& r) {
  const CMatrix uf = oracle::assemble(basis);
  const CMatrix k = uf.adjoint() * oracle::omega(p) * uf;
  const CMatrix v = oracle::assemble(r.v_matrix);
  const Index m = basis.cols();
  RVector d(2 * m);
  d << r.theta_plus, -r.theta_plus;
  return oracle::spectral_norm(k * v - oracle::c_metric(m) * v * d.asDiagonal()) / oracle::spectral_norm(k);
}

// Dense max-norm versions of the three post-state quantities in metric g.
struct Dense {
  double zz, pp, pz;
};
Dense dense_invariants(const IhlBases& b, const CMatrix& g, bool c_metric) {
  const CMatrix z = oracle::assemble(b.z);
  const CMatrix pm = oracle::assemble(b.p);
  const Index k = b.z.cols(), q = b.p.cols();
  const CMatrix iz = c_metric ? oracle::c_metric(k) : CMatrix::Identity(2 * k, 2 * k);
  const CMatrix ip = c_metric ? oracle::c_metric(q) : CMatrix::Identity(2 * q, 2 * q);
  return {oracle::max_abs(z.adjoint() * g * z - iz), oracle::max_abs(pm.adjoint() * g * pm - ip),
          oracle::max_abs(pm.adjoint() * g * z)};
}

CMatrix zp_assembled(const IhlBases& b) { return oracle::assemble(PhiBlockMatrix::hcat({&b.z, &b.p})); }

}  // namespace

TEST_CASE("rayleigh_ritz") {
  oracle::Rng rng(107);
  SUBCASE("Omega = I gives unit Ritz values") {
    const BSHProblem p(CMatrix::Identity(6, 6), CMatrix::Zero(6, 6));
    const CMatrix q = oracle::range_basis(rng.cmat(6, 3));
    const RitzOutput r = rayleigh_ritz(p, PhiBlockMatrix(q, CMatrix::Zero(6, 3)));
    CHECK((r.theta_plus - RVector::Ones(3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("random basis, dense residual") {
    const BSHProblem p = oracle::random_definite(rng, 16);
    const PhiBlockMatrix basis = c_basis(rng, 16, 6);
    const RitzOutput r = rayleigh_ritz(p, basis);
    CHECK(ritz_residual(p, basis, r) <= 1e-11);
    CHECK(oracle::c_loss_max(r.v_matrix) <= 1e-11);
    for (Index i = 1; i < r.theta_plus.size(); ++i) CHECK(r.theta_plus(i) >= r.theta_plus(i - 1));
    CHECK(r.theta_plus(0) > 0.0);
  }
  SUBCASE("exact eigenvectors give exact eigenvalues") {
    const BSHProblem p = oracle::random_definite(rng, 2);
    const StructuredSpectrum s = dense_bse_solve(p);
    const RitzOutput r = rayleigh_ritz(p, s.eigvecs);
    CHECK(oracle::max_rel_err(r.theta_plus, s.lambda_plus) <= 1e-13);
    CHECK(oracle::max_abs(r.v_matrix.x().cwiseAbs() - CMatrix::Identity(2, 2)) <= 1e-12);
    CHECK(oracle::max_abs(r.v_matrix.y()) <= 1e-12);
  }
  SUBCASE("indefinite projection") {
    const BSHProblem p(CMatrix::Identity(2, 2), CMatrix::Zero(2, 2));
    const BSHProblem bad(CMatrix::Constant(1, 1, 1.0), CMatrix::Constant(1, 1, 2.0));
    CHECK_THROWS_AS(rayleigh_ritz(bad, PhiBlockMatrix::identity(1, 1)), NotDefiniteError);
  }
}

TEST_CASE("ihl_update_c on small random instances") {
  oracle::Rng rng(109);
  const BSHProblem p = oracle::random_definite(rng, 4);
  const PhiBlockMatrix basis = c_basis(rng, 4, 3);
  const IhlBases b = ihl_update_c(basis, rayleigh_ritz(p, basis), 1);
  const Dense d = dense_invariants(b, oracle::c_metric(4), true);
  CHECK(d.zz <= 1e-11);
  CHECK(d.pp <= 1e-11);
  CHECK(d.pz <= 1e-11);
  const IhlInvariants m = measure_ihl_c(b);
  CHECK(std::abs(m.zz - d.zz) <= 1e-13);
  CHECK(std::abs(m.pz - d.pz) <= 1e-13);
  CHECK(b.q.rows() == 2);
  CHECK(b.q.cols() == 1);
  CHECK_FALSE(b.completed);
}

TEST_CASE("property: IHL post-state and span preservation") {
  oracle::Rng rng(113);
  for (int trial = 0; trial < 40; ++trial) {
    const Index k = 1 + trial % 3;
    const Index n = 4 * k + 4 + trial % 5;
    const BSHProblem p = oracle::random_definite(rng, n);
    const PhiBlockMatrix basis = c_basis(rng, n, 3 * k);
    const IhlBases b = ihl_update_c(basis, rayleigh_ritz(p, basis), k);
    const Dense d = dense_invariants(b, oracle::c_metric(n), true);
    const double scale = sq_norm(basis);
    CHECK(d.zz <= 1e-11 * scale);
    CHECK(d.pp <= 1e-11 * scale);
    CHECK(d.pz <= 1e-11 * scale);
    CHECK(b.p.cols() == k);
    // span{Z, P} = span{Z_new, Z_old}.
    const PhiBlockMatrix z_old = basis.blocks(0, k);
    const CMatrix ref = oracle::assemble(PhiBlockMatrix::hcat({&b.z, &z_old}));
    CHECK(oracle::span_residual(zp_assembled(b), ref) <= 1e-10);
    CHECK(oracle::span_residual(ref, zp_assembled(b)) <= 1e-10);
  }
}

TEST_CASE("ihl_update_c on an exact eigenbasis completes Q") {
  oracle::Rng rng(127);
  const BSHProblem p = oracle::random_definite(rng, 6);
  const StructuredSpectrum s = dense_bse_solve(p);
  const PhiBlockMatrix basis = s.eigvecs.blocks(0, 4);
  const RitzOutput r = rayleigh_ritz(p, basis);
  const IhlBases b = ihl_update_c(basis, r, 2);
  // V_12 vanishes up to rounding; either completion or SVQB on the noise
  // gives a valid P inside the complement.
  CHECK(b.p.cols() == 2);
  const Dense d = dense_invariants(b, oracle::c_metric(6), true);
  CHECK(d.zz <= 1e-11);
  CHECK(d.pp <= 1e-11);
  CHECK(d.pz <= 1e-11);
  // Z reproduces the leading eigenvectors, P lies in the span of the rest.
  CHECK(oracle::span_residual(oracle::assemble(b.z), oracle::assemble(basis.blocks(0, 2))) <= 1e-11);
  CHECK(oracle::span_residual(oracle::assemble(b.p), oracle::assemble(basis.blocks(2, 2))) <= 1e-11);
}

TEST_CASE("ihl_update_c with a rank-deficient coupling keeps P full") {
  // The leading Ritz block is already in the basis, so V_12 has rank one
  // short of k and Q must be completed.
  oracle::Rng rng(131);
  const BSHProblem p = oracle::random_definite(rng, 10);
  const StructuredSpectrum s = dense_bse_solve(p);
  const PhiBlockMatrix e0 = s.eigvecs.blocks(0, 1);
  const PhiBlockMatrix rest = c_project_against(rng.phi(10, 5), e0);
  const PhiBlockMatrix basis = c_orthonormalize_cgs(PhiBlockMatrix::hcat({&e0, &rest})).first;
  const IhlBases b = ihl_update_c(basis, rayleigh_ritz(p, basis), 2);
  CHECK(b.p.cols() == 2);
  const Dense d = dense_invariants(b, oracle::c_metric(10), true);
  CHECK(d.zz <= 1e-11);
  CHECK(d.pp <= 1e-11);
  CHECK(d.pz <= 1e-11);
  MESSAGE("completed: " << b.completed);
}

TEST_CASE("ihl_update_omega") {
  oracle::Rng rng(137);
  SUBCASE("Omega = I") {
    const BSHProblem p(CMatrix::Identity(8, 8), CMatrix::Zero(8, 8));
    const PhiBlockMatrix basis = omega_orthonormalize(p, rng.phi(8, 6)).first;
    const IhlBases b = ihl_update_omega(p, basis, rayleigh_ritz_omega(basis), 2);
    const Dense d = dense_invariants(b, oracle::omega(p), false);
    CHECK(d.zz <= 1e-12);
    CHECK(d.pp <= 1e-12);
    CHECK(d.pz <= 1e-12);
  }
  SUBCASE("random instances") {
    for (int trial = 0; trial < 20; ++trial) {
      const BSHProblem p = oracle::random_definite(rng, 16);
      const PhiBlockMatrix basis = omega_orthonormalize(p, rng.phi(16, 6)).first;
      const IhlBases b = ihl_update_omega(p, basis, rayleigh_ritz_omega(basis), 2);
      const Dense d = dense_invariants(b, oracle::omega(p), false);
      CHECK(d.zz <= 1e-11);
      CHECK(d.pp <= 1e-11);
      CHECK(d.pz <= 1e-11);
      const IhlInvariants m = measure_ihl_omega(p, b);
      CHECK(m.pz <= 1e-11);
      const PhiBlockMatrix z_old = basis.blocks(0, 2);
      const CMatrix ref = oracle::assemble(PhiBlockMatrix::hcat({&b.z, &z_old}));
      CHECK(oracle::span_residual(zp_assembled(b), ref) <= 1e-10);
    }
  }
  SUBCASE("exact eigenbasis") {
    const BSHProblem p = oracle::random_definite(rng, 8);
    const StructuredSpectrum s = dense_bse_solve(p);
    const PhiBlockMatrix basis = omega_orthonormalize(p, s.eigvecs.blocks(0, 6)).first;
    const IhlBases b = ihl_update_omega(p, basis, rayleigh_ritz_omega(basis), 2);
    for (Index j = 0; j < 2; ++j) {
      const CMatrix want = oracle::assemble(s.eigvecs.blocks(j, 1));
      CHECK(oracle::span_residual(oracle::assemble(b.z.blocks(j, 1)), want) <= 1e-11);
    }
  }
}

TEST_CASE("selective_reorth_needed") {
  const PhiBlockMatrix id = PhiBlockMatrix::identity(6, 4);
  IhlBases exact{id.blocks(0, 2), id.blocks(2, 2), {}, false};
  const ReorthCheck a = selective_reorth_needed(exact, 7, 1.49e-8, 1e-2);
  CHECK(a.measured <= 1e-14);
  CHECK_FALSE(a.needed);

  IhlBases bumped = exact;
  CMatrix px = bumped.p.x();
  px(3, 0) += 1e-6;
  bumped.p = PhiBlockMatrix(px, bumped.p.y());
  const ReorthCheck b = selective_reorth_needed(bumped, 7, 1.5e-8, 1.0);
  CHECK(b.needed);
  CHECK(b.threshold == doctest::Approx(1.5e-8));

  const ReorthCheck c = selective_reorth_needed(exact, 7, 1.49e-8, 1e-13);
  CHECK(c.threshold == doctest::Approx(1e-14));
  CHECK_FALSE(c.needed);
  px = exact.p.x();
  px(2, 1) += 1e-16;
  IhlBases tiny{exact.z, PhiBlockMatrix(px, exact.p.y()), {}, false};
  CHECK_FALSE(selective_reorth_needed(tiny, 7, 1.49e-8, 1e-13).needed);
}

TEST_CASE("property: selective check soundness (logged)") {
  oracle::Rng rng(139);
  int misses = 0, silent = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const PhiBlockMatrix zp = c_basis(rng, 12, 4);
    const double eps = std::pow(10.0, rng.unif(-14.0, -6.0));
    const PhiBlockMatrix noisy(zp.x() + eps * rng.cmat(12, 4), zp.y() + eps * rng.cmat(12, 4));
    IhlBases b{noisy.blocks(0, 2), noisy.blocks(2, 2), {}, false};
    const ReorthCheck r = selective_reorth_needed(b, trial, 1.49e-8, 1e-4);
    if (!r.needed) {
      ++silent;
      if (oracle::c_loss_max(noisy) > 1e3 * r.measured) ++misses;
    }
  }
  MESSAGE("selective check: " << misses << " of " << silent << " silent cases exceeded 1e3 x measured");
  CHECK(silent > 0);
}

TEST_CASE("reorthogonalize restores the invariants") {
  oracle::Rng rng(149);
  const PhiBlockMatrix zp = c_basis(rng, 10, 4);
  IhlBases b{PhiBlockMatrix(zp.x().leftCols(2) + 1e-7 * rng.cmat(10, 2), zp.y().leftCols(2)),
             PhiBlockMatrix(zp.x().rightCols(2), zp.y().rightCols(2) + 1e-7 * rng.cmat(10, 2)), {}, false};
  CHECK(measure_ihl_c(b).pz > 1e-9);
  reorthogonalize(b);
  const IhlInvariants m = measure_ihl_c(b);
  const double bound = 100 * u * sq_norm(PhiBlockMatrix::hcat({&b.z, &b.p}));
  CHECK(m.zz <= bound);
  CHECK(m.pp <= bound);
  CHECK(m.pz <= bound);
}

TEST_CASE("property: multiplicative update degradation and one-pass repair") {
  oracle::Rng rng(151);
  int repaired = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const Index n = 20, m = 6, k = 3;
    const double eu = std::pow(10.0, rng.unif(-13.0, -7.0));
    const double ev = std::pow(10.0, rng.unif(-13.0, -7.0));
    const PhiBlockMatrix u0 = c_orthonormalize_cgs(oracle::conditioned_phi(rng, n, m, 1.0, 0.0)).first;
    const PhiBlockMatrix uu(u0.x() + eu * rng.cmat(n, m), u0.y() + eu * rng.cmat(n, m));
    const PhiBlockMatrix v0 = c_orthonormalize_cgs(oracle::conditioned_phi(rng, m, k, 1.0, 0.0)).first;
    const PhiBlockMatrix vv(v0.x() + ev * rng.cmat(m, k), v0.y() + ev * rng.cmat(m, k));

    const double loss_u = oracle::c_loss_2(uu), loss_v = oracle::c_loss_2(vv);
    const double nu = oracle::spectral_norm(oracle::assemble(uu));
    const double nv = oracle::spectral_norm(oracle::assemble(vv));
    const PhiBlockMatrix z = phi_product(uu, vv);
    const double bound = 10 * (loss_u * nv * nv + loss_v * nu * nu) + 100 * u * nu * nu * nv * nv;
    CHECK(oracle::c_loss_2(z) <= bound);

    const PhiBlockMatrix fixed = c_orthonormalize_cgs(z, 1).first;
    const double nz = oracle::spectral_norm(oracle::assemble(fixed));
    if (oracle::c_loss_2(fixed) <= 100 * u * nz * nz) ++repaired;
  }
  CHECK(repaired == trials);
}
