#include <doctest.h>

#include "bse/dense_bse.hpp"
#include "bse/problems.hpp"
#include "bse/symplectic.hpp"
#include "oracles.hpp"

using namespace bse;
using oracle::cplx;

namespace {

CMatrix scalar(cplx v) { return CMatrix::Constant(1, 1, v); }

// ||Omega Z - C_n Z diag(Lambda, -Lambda)|| on the assembly.
double eigen_residual(const BSHProblem& p, const StructuredSpectrum& s) {
  const Index n = p.n();
  const Index k = s.lambda_plus.size();
  const CMatrix z = oracle::assemble(s.eigvecs);
  RVector d(2 * k);
  d << s.lambda_plus, -s.lambda_plus;
  return oracle::spectral_norm(oracle::omega(p) * z - oracle::c_metric(n) * z * d.asDiagonal());
}

void check_williamson(const RMatrix& m, const WilliamsonResult& w, double tol_j, double tol_d) {
  const Index n = m.rows() / 2;
  const RMatrix& s = w.s_matrix;
  CHECK((s.transpose() * oracle::j_metric(n) * s - oracle::j_metric(n)).cwiseAbs().maxCoeff() <= tol_j);
  RVector dd(2 * n);
  dd << w.lambda, w.lambda;
  const RMatrix diag = dd.asDiagonal();
  CHECK((s.transpose() * m * s - diag).cwiseAbs().maxCoeff() <= tol_d * m.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("dense_bse_solve on the 1x1 problem") {
  const BSHProblem p(scalar(2.5), scalar(-1.5));
  const StructuredSpectrum s = dense_bse_solve(p);
  REQUIRE(s.lambda_plus.size() == 1);
  CHECK(s.lambda_plus(0) == doctest::Approx(2.0).epsilon(1e-14));
  // Eigenvector up to a unimodular phase: (3, 1) / sqrt(8).
  const cplx x = s.eigvecs.x()(0, 0);
  const cplx y = s.eigvecs.y()(0, 0);
  CHECK(std::abs(x) == doctest::Approx(3.0 / std::sqrt(8.0)).epsilon(1e-14));
  CHECK(std::abs(y) == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-14));
  CHECK(std::abs(y / x - cplx(1.0 / 3.0)) <= 1e-14);
  CHECK(oracle::c_loss_max(s.eigvecs) <= 1e-14);
}

TEST_CASE("dense_bse_solve with Omega = I") {
  const BSHProblem p(CMatrix::Identity(4, 4), CMatrix::Zero(4, 4));
  const StructuredSpectrum s = dense_bse_solve(p);
  CHECK((s.lambda_plus - RVector::Ones(4)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(oracle::max_abs(s.eigvecs.y()) <= 1e-14);
  CHECK((s.eigvecs.x().adjoint() * s.eigvecs.x()).isApprox(CMatrix::Identity(4, 4), 1e-13));
}

TEST_CASE("dense_bse_solve matches the general eigensolver") {
  oracle::Rng rng(41);
  const BSHProblem p = oracle::random_definite(rng, 32);
  const StructuredSpectrum s = dense_bse_solve(p);
  const RVector want = oracle::bse_positive_eigs(p.a_block(), p.b_block());
  CHECK(oracle::max_rel_err(s.lambda_plus, want) <= 1e-12);
  CHECK(eigen_residual(p, s) <= 1e-12 * oracle::spectral_norm(oracle::omega(p)));
  CHECK(oracle::c_loss_max(s.eigvecs) <= 1e-11);
}

TEST_CASE("dense_bse_solve errors") {
  const BSHProblem indefinite(scalar(1.0), scalar(2.0));
  CHECK_THROWS_AS(dense_bse_solve(indefinite), NotDefiniteError);
  const BSHProblem big(CMatrix::Identity(8, 8), CMatrix::Zero(8, 8));
  CHECK_THROWS_AS(dense_bse_solve(big, 4), DimensionError);
}

TEST_CASE("property: oracle consistency over seeded problems") {
  oracle::Rng rng(43);
  const Index sizes[] = {4, 8, 16, 32};
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = sizes[trial % 4];
    const BSHProblem p = oracle::random_definite(rng, n, rng.unif(0.1, 5.0));
    const StructuredSpectrum s = dense_bse_solve(p);
    const RVector want = oracle::bse_positive_eigs(p.a_block(), p.b_block());
    REQUIRE(want.size() == n);
    CHECK(oracle::max_rel_err(s.lambda_plus, want) <= 1e-11);
    // Phi(X, -Y)^H Phi(X, Y) = I.
    const CMatrix lhs = oracle::assemble(s.eigvecs.x(), -s.eigvecs.y()).adjoint() * oracle::assemble(s.eigvecs);
    CHECK(oracle::max_abs(lhs - CMatrix::Identity(2 * n, 2 * n)) <= 1e-11);
    for (Index i = 1; i < n; ++i) CHECK(s.lambda_plus(i) >= s.lambda_plus(i - 1));
  }
}

TEST_CASE("structured_gram_eig") {
  SUBCASE("scalar") {
    const StructuredSpectrum s = structured_gram_eig({scalar(3.0), scalar(0.0)});
    CHECK(s.lambda_plus(0) == doctest::Approx(3.0));
    CHECK(std::abs(s.eigvecs.x()(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(s.eigvecs.y()(0, 0)) <= 1e-15);
  }
  SUBCASE("identity") {
    const StructuredSpectrum s = structured_gram_eig({CMatrix::Identity(2, 2), CMatrix::Zero(2, 2)});
    CHECK((s.lambda_plus - RVector::Ones(2)).norm() <= 1e-15);
    CHECK(oracle::max_abs(s.eigvecs.y()) <= 1e-15);
    CHECK((s.eigvecs.x().adjoint() * s.eigvecs.x()).isApprox(CMatrix::Identity(2, 2)));
  }
  SUBCASE("random Gram matrices") {
    oracle::Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
      const PhiBlockMatrix u = rng.phi(8, 3);
      const CGramPair g = c_gram(u, u);
      const StructuredSpectrum s = structured_gram_eig(g, 1e-14);
      const CMatrix f = oracle::assemble(s.eigvecs);
      RVector d(6);
      d << s.lambda_plus, s.lambda_plus;
      const CMatrix rhs = f * oracle::c_metric(3) * d.asDiagonal();
      const CMatrix m = g.assemble();
      CHECK(oracle::max_abs(m * f - rhs) <= 1e-12 * oracle::spectral_norm(m));
      CHECK(oracle::max_abs(f.adjoint() * f - CMatrix::Identity(6, 6)) <= 1e-12);
    }
  }
  SUBCASE("singular Gram breaks down") {
    const PhiBlockMatrix u(CMatrix::Ones(3, 1), CMatrix::Ones(3, 1));
    CHECK_THROWS_AS(structured_gram_eig(c_gram(u, u)), BreakdownError);
  }
}

TEST_CASE("williamson_dense") {
  SUBCASE("already diagonal") {
    RMatrix m = RVector((RVector(4) << 2, 3, 2, 3).finished()).asDiagonal();
    const WilliamsonResult w = williamson_dense(m);
    CHECK(w.lambda(0) == doctest::Approx(2.0));
    CHECK(w.lambda(1) == doctest::Approx(3.0));
    CHECK((w.s_matrix.cwiseAbs() - RMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-12);
    check_williamson(m, w, 1e-12, 1e-12);
  }
  SUBCASE("diag(1, 4)") {
    RMatrix m = RVector((RVector(2) << 1, 4).finished()).asDiagonal();
    const WilliamsonResult w = williamson_dense(m);
    CHECK(w.lambda(0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::abs(w.s_matrix(0, 0)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK(std::abs(w.s_matrix(1, 1)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));
    check_williamson(m, w, 1e-13, 1e-13);
  }
  SUBCASE("random spd") {
    oracle::Rng rng(53);
    for (int trial = 0; trial < 10; ++trial) {
      const RMatrix m = oracle::random_spd(rng, 4, 100.0);
      const WilliamsonResult w = williamson_dense(m);
      CHECK(oracle::max_rel_err(w.lambda, oracle::symplectic_eigs(m)) <= 1e-10);
      check_williamson(m, w, 1e-10, 1e-9);
    }
  }
  SUBCASE("symplectic congruence invariance") {
    oracle::Rng rng(59);
    const RMatrix m = oracle::random_spd(rng, 5, 10.0);
    const RMatrix l = symplectic_shear(5, 1, 1.2, -std::sqrt(2.0));
    const RMatrix mm = l.transpose() * m * l;
    CHECK(oracle::max_rel_err(williamson_dense(0.5 * (mm + mm.transpose())).lambda, williamson_dense(m).lambda) <= 1e-9);
  }
  SUBCASE("not positive definite") {
    RMatrix m = RVector((RVector(2) << 1, -4).finished()).asDiagonal();
    CHECK_THROWS_AS(williamson_dense(m), NotDefiniteError);
  }
}
