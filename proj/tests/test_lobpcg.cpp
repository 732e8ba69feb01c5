#include <doctest.h>

#include <array>

#include "bse/dense_bse.hpp"
#include "bse/lobpcg.hpp"
#include "bse/problems.hpp"
#include "oracles.hpp"

using namespace bse;
using oracle::cplx;

namespace {

CMatrix scalar(cplx v) { return CMatrix::Constant(1, 1, v); }

Preconditioner diag_of(const BSHProblem& p) {
  return Preconditioner::diag_a(p.a_block().diagonal().real(), oracle::max_abs(p.a_block()));
}

std::vector<double> geometric(double from, double to, int steps) {
  std::vector<double> v;
  for (int i = 0; i <= steps; ++i) v.push_back(from * std::pow(to / from, double(i) / steps));
  return v;
}

}  // namespace

TEST_CASE("k rule") {
  CHECK(SolverConfig::default_block_size(1) == 6);
  CHECK(SolverConfig::default_block_size(3) == 8);
  CHECK(SolverConfig::default_block_size(12) == 18);
  CHECK(SolverConfig::default_block_size(23) == 35);
  CHECK(SolverConfig::default_block_size(50) == 75);
  SolverConfig cfg;
  cfg.l = 3;
  CHECK(cfg.block_size() == 8);
  cfg.k = 4;
  CHECK(cfg.block_size() == 4);
  cfg.k = 2;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.k.reset();
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("mode and preconditioner names") {
  for (SolverMode m : {SolverMode::C, SolverMode::CIhl, SolverMode::OmegaIhl, SolverMode::Adaptive})
    CHECK(parse_solver_mode(to_string(m)) == m);
  for (PreconditionerKind k : {PreconditionerKind::Identity, PreconditionerKind::DiagA, PreconditionerKind::BlockDiagAB})
    CHECK(parse_preconditioner_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_solver_mode("lanczos"), Error);
}

TEST_CASE("preconditioners") {
  oracle::Rng rng(157);
  const PhiBlockMatrix r = rng.phi(4, 2);
  SUBCASE("identity") {
    const PhiBlockMatrix w = apply_preconditioner(Preconditioner::identity(), r);
    CHECK(w.x() == r.x());
    CHECK(w.y() == r.y());
  }
  SUBCASE("diag_a with A = 2I") {
    const PhiBlockMatrix w = apply_preconditioner(Preconditioner::diag_a(RVector::Constant(4, 2.0), 2.0), r);
    CHECK(oracle::max_abs(w.x() - 0.5 * r.x()) <= 1e-16);
    CHECK(oracle::max_abs(w.y() - 0.5 * r.y()) <= 1e-16);
  }
  SUBCASE("block_diag_ab 2x2 solve") {
    const Preconditioner t = Preconditioner::block_diag_ab(RVector::Constant(1, 2.5), CVector::Constant(1, -1.5), 2.5);
    const PhiBlockMatrix w = apply_preconditioner(t, PhiBlockMatrix(scalar(1.0), scalar(0.0)));
    CHECK(std::abs(w.x()(0, 0) - 0.625) <= 1e-15);
    CHECK(std::abs(w.y()(0, 0) - 0.375) <= 1e-15);
  }
  SUBCASE("block_diag_ab is Hermitian positive on random vectors") {
    const BSHProblem p = oracle::random_definite(rng, 4);
    const Preconditioner t = Preconditioner::block_diag_ab(p.a_block().diagonal().real(), p.b_block().diagonal(), 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const PhiBlockMatrix g = rng.phi(4, 1);
      const CMatrix gf = oracle::assemble(g);
      const CMatrix tg = oracle::assemble(t.apply(g));
      const cplx q = (gf.col(0).adjoint() * tg.col(0))(0, 0);
      CHECK(q.real() > 0.0);
      CHECK(std::abs(q.imag()) <= 1e-12 * q.real());
    }
  }
  SUBCASE("singular diagonal") {
    RVector d = RVector::Ones(3);
    d(1) = 0.0;
    try {
      Preconditioner::diag_a(d, 1.0);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
    CHECK_THROWS_AS(Preconditioner::block_diag_ab(RVector::Ones(1), CVector::Ones(1), 1.0), Error);
  }
}

TEST_CASE("compute_residuals") {
  oracle::Rng rng(163);
  const BSHProblem p = oracle::random_definite(rng, 8);
  const StructuredSpectrum s = dense_bse_solve(p);
  const double onorm = oracle::spectral_norm(oracle::omega(p));
  const PhiBlockMatrix z = s.eigvecs.blocks(0, 3);
  const RVector theta = s.lambda_plus.head(3);

  SUBCASE("exact eigenpairs") {
    const ResidualSet rs = compute_residuals(p, z, theta, onorm);
    CHECK(rs.res.maxCoeff() <= 1e-14);
  }
  SUBCASE("perturbed theta scales as delta / (||Omega|| + theta)") {
    const double delta = 1e-6;
    const ResidualSet rs = compute_residuals(p, z, (theta.array() + delta).matrix(), onorm);
    for (Index i = 0; i < 3; ++i) {
      // r = -delta C z on the first column, so ||r|| = delta ||z||.
      CHECK(rs.res(i) == doctest::Approx(delta / (onorm + theta(i) + delta)).epsilon(1e-6));
    }
  }
  SUBCASE("random input matches the dense residual") {
    const PhiBlockMatrix zr = rng.phi(8, 2);
    RVector th(2);
    th << 0.7, 1.9;
    const ResidualSet rs = compute_residuals(p, zr, th, onorm);
    const CMatrix zf = oracle::assemble(zr);
    RVector d(4);
    d << th, -th;
    const CMatrix dense = oracle::omega(p) * zf - oracle::c_metric(8) * zf * d.asDiagonal();
    CHECK(oracle::max_abs(oracle::assemble(rs.r) - dense) <= 1e-14 * oracle::max_abs(dense) * 10);
    for (Index i = 0; i < 2; ++i)
      CHECK(rs.res(i) == doctest::Approx(dense.col(i).norm() / ((onorm + th(i)) * zf.col(i).norm())).epsilon(1e-13));
  }
}

TEST_CASE("slope") {
  const std::vector<double> flat(11, 1e-12);
  CHECK(*slope(flat, 10) == 0.0);
  CHECK_FALSE(slope(std::span<const double>(flat).first(10), 10).has_value());

  std::vector<double> h = geometric(1e-10, 1e-11, 5);
  const std::vector<double> tail = geometric(1e-11, std::pow(10.0, -11.25), 5);
  h.insert(h.end(), tail.begin() + 1, tail.end());
  REQUIRE(h.size() == 11);
  CHECK(*slope(h, 10) == doctest::Approx(-0.125).epsilon(1e-12));
  CHECK(*slope(h, 5) == doctest::Approx(-0.05).epsilon(1e-12));
  // s5 = -0.05 > s10 / 2 = -0.0625
  CHECK(switch_decision(h));
}

TEST_CASE("switch_decision") {
  const std::array<double, 3> up{2e-12, 1.5e-12, 3e-12};
  CHECK(switch_decision(up));
  const std::array<double, 3> up_high{2e-9, 1.5e-9, 3e-9};
  CHECK_FALSE(switch_decision(up_high));
  // Steady geometric decrease below the gate: s5 == s10, no switch.
  const std::vector<double> steady = geometric(1e-11, 1e-13, 10);
  CHECK_FALSE(switch_decision(steady));
  // Too short for either rule.
  const std::array<double, 2> two{1e-11, 2e-11};
  CHECK_FALSE(switch_decision(two));
  // Once the gate has been passed it stays open.
  const std::array<double, 4> latched{1e-9, 5e-11, 2e-10, 3e-10};
  CHECK(switch_decision(latched));
  // Everything at or above the gate: never.
  const std::vector<double> high = geometric(1e-3, 1e-10, 20);
  CHECK_FALSE(switch_decision(high));
}

TEST_CASE("lobpcg_solve with Omega = I") {
  const BSHProblem p(CMatrix::Identity(18, 18), CMatrix::Zero(18, 18));
  SolverConfig cfg;
  cfg.l = 1;
  cfg.mode = SolverMode::CIhl;
  const Solution s = lobpcg_solve(p, Preconditioner::identity(), cfg);
  CHECK(s.converged);
  // The first step already finds an exact eigenvector; the Gaussian start
  // block's growth factor limits that step to about 1e-11.
  REQUIRE(s.history.records.size() >= 2);
  CHECK(s.history.records[1].res_max <= 1e-10);
  CHECK(s.iterations <= 3);
  CHECK(s.lambda(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.residuals(0) <= 1e-14);
}

TEST_CASE("lobpcg_solve, n = 64, l = 4, all modes") {
  const GeneratedProblem g = gen_random_definite_bsh(64, 11);
  const RVector want = dense_bse_solve(g.bsh()).lambda_plus.head(4);
  for (SolverMode mode : {SolverMode::C, SolverMode::CIhl, SolverMode::OmegaIhl, SolverMode::Adaptive}) {
    CAPTURE(to_string(mode));
    SolverConfig cfg;
    cfg.l = 4;
    cfg.tol = 1e-12;
    cfg.mode = mode;
    const Solution s = lobpcg_solve(g.bsh(), diag_of(g.bsh()), cfg);
    CHECK(s.block_size == 9);
    CHECK(s.converged);
    CHECK(oracle::max_rel_err(s.lambda, want) <= 1e-10);
    CHECK(s.residuals.maxCoeff() <= 1e-12);
    CHECK(oracle::c_loss_max(s.eigvecs) <= 1e-10);
    CHECK(s.history.records.size() == static_cast<size_t>(s.iterations + 1));
  }
}

TEST_CASE("property: Ritz values are non-increasing under CIHL") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GeneratedProblem g = gen_random_definite_bsh(40, seed);
    SolverConfig cfg;
    cfg.l = 3;
    cfg.tol = 1e-12;
    cfg.mode = SolverMode::CIhl;
    cfg.seed = seed;
    const Solution s = lobpcg_solve(g.bsh(), diag_of(g.bsh()), cfg);
    CHECK(s.converged);
    const auto& rec = s.history.records;
    // The selective check tolerates a C-orthogonality loss up to res / 10,
    // which may lift Ritz values by about that much.
    for (size_t it = 1; it < rec.size(); ++it) {
      const double slack = 10 * cfg.tol + rec[it - 1].res_max;
      for (size_t j = 0; j < rec[it].ritz.size(); ++j) CHECK(rec[it].ritz[j] <= rec[it - 1].ritz[j] * (1 + slack));
    }
  }
}

TEST_CASE("determinism") {
  const GeneratedProblem g = gen_random_definite_bsh(48, 3);
  SolverConfig cfg;
  cfg.l = 4;
  cfg.tol = 1e-12;
  cfg.seed = 99;
  const Solution a = adaptive_solve(g.bsh(), diag_of(g.bsh()), cfg);
  const Solution b = adaptive_solve(g.bsh(), diag_of(g.bsh()), cfg);
  CHECK(a.history.res_max_series() == b.history.res_max_series());
  CHECK(a.lambda == b.lambda);
  CHECK(a.eigvecs.x() == b.eigvecs.x());
}

TEST_CASE("adaptive without a switch reproduces CIHL") {
  const GeneratedProblem g = gen_random_definite_bsh(32, 5);
  SolverConfig cfg;
  cfg.l = 4;
  cfg.tol = 1e-12;
  cfg.mode = SolverMode::CIhl;
  const Solution c = lobpcg_solve(g.bsh(), diag_of(g.bsh()), cfg);
  const Solution a = adaptive_solve(g.bsh(), diag_of(g.bsh()), cfg);
  REQUIRE_FALSE(a.history.switch_iteration.has_value());
  CHECK(a.history.res_max_series() == c.history.res_max_series());
  CHECK(a.lambda == c.lambda);
}

TEST_CASE("forced stagnation triggers the switch") {
  const GeneratedProblem g = gen_random_definite_bsh(48, 9);
  SolverConfig cfg;
  cfg.l = 4;
  cfg.tol = 1e-12;
  // Below the gate the C-metric residual is reported as slowly rising.
  cfg.residual_hook = [](int it, IterMetric metric, double res) {
    if (metric == IterMetric::C && res < 1e-10) return 1e-11 * (1.0 + 0.01 * it);
    return res;
  };
  const Solution s = adaptive_solve(g.bsh(), diag_of(g.bsh()), cfg);
  REQUIRE(s.history.switch_iteration.has_value());
  CHECK(s.converged);
  CHECK(s.residuals.maxCoeff() <= 1e-12);
  const auto& rec = s.history.records;
  const int sw = *s.history.switch_iteration;
  for (const auto& r : rec) CHECK((r.iteration <= sw) == (r.metric == IterMetric::C));
  CHECK(oracle::max_rel_err(s.lambda, dense_bse_solve(g.bsh()).lambda_plus.head(4)) <= 1e-10);
}

TEST_CASE("small n takes the dense path") {
  const GeneratedProblem g = gen_random_definite_bsh(12, 1);
  SolverConfig cfg;
  cfg.l = 5;
  const Solution s = lobpcg_solve(g.bsh(), Preconditioner::identity(), cfg);
  CHECK(s.dense_path);
  CHECK(s.converged);
  CHECK(oracle::max_rel_err(s.lambda, dense_bse_solve(g.bsh()).lambda_plus.head(5)) <= 1e-12);
}

TEST_CASE("initial block validation") {
  const GeneratedProblem g = gen_random_definite_bsh(12, 1);
  SolverConfig cfg;
  cfg.l = 2;
  oracle::Rng rng(167);
  CHECK_THROWS_AS(lobpcg_solve(g.bsh(), Preconditioner::identity(), cfg, rng.phi(11, 3)), DimensionError);
  CHECK_THROWS_AS(lobpcg_solve(g.bsh(), Preconditioner::identity(), cfg, rng.phi(12, 1)), DimensionError);
  CHECK_THROWS_AS(lobpcg_solve(g.bsh(), Preconditioner::identity(), cfg, rng.phi(12, 5)), DimensionError);
}
