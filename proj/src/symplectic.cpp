#include "bse/symplectic.hpp"

#include <algorithm>
#include <cmath>

#include "bse/ihl.hpp"
#include "bse/problems.hpp"

namespace bse {

BSHProblem spd_to_bsh(const RMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("spd_to_bsh: M is not square");
  if (m.rows() % 2 != 0) throw DimensionError("spd_to_bsh: M has odd dimension");
  const double scale = m.size() ? m.cwiseAbs().maxCoeff() : 0.0;
  const double asym = m.size() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym > 1e-12 * std::max(1.0, scale))
    throw SymmetryError("spd_to_bsh: M is not symmetric (||M - M^T||_max = " + std::to_string(asym) + ")");

  const Index n = m.rows() / 2;
  const RMatrix m11 = m.topLeftCorner(n, n);
  const RMatrix m12 = m.topRightCorner(n, n);
  const RMatrix m21 = m.bottomLeftCorner(n, n);
  const RMatrix m22 = m.bottomRightCorner(n, n);
  CMatrix a(n, n), b(n, n);
  a.real() = 0.5 * (m11 + m22);
  a.imag() = 0.5 * (m12 - m21);
  b.real() = 0.5 * (m11 - m22);
  b.imag() = -0.5 * (m12 + m21);
  return BSHProblem(std::move(a), std::move(b));
}

SymplecticBlock symplectic_from_phi(const PhiBlockMatrix& z) {
  const Index n = z.rows();
  const Index l = z.cols();
  const double r = 1.0 / std::sqrt(2.0);
  const cplx i1(0.0, 1.0);

  // Q_n^H [top; bottom] = [top + bottom; i (top - bottom)] / sqrt(2), applied
  // to the left half [X; Y] and the right half [conj(Y); conj(X)].
  const CMatrix left_top = r * (z.x() + z.y());
  const CMatrix left_bot = (r * i1) * (z.x() - z.y());
  const CMatrix right_top = r * (z.y().conjugate() + z.x().conjugate());
  const CMatrix right_bot = (r * i1) * (z.y().conjugate() - z.x().conjugate());

  // (.) Q_l = [L + R, -i L + i R] / sqrt(2).
  CMatrix full(2 * n, 2 * l);
  full.topLeftCorner(n, l) = r * (left_top + right_top);
  full.bottomLeftCorner(n, l) = r * (left_bot + right_bot);
  full.topRightCorner(n, l) = (r * i1) * (right_top - left_top);
  full.bottomRightCorner(n, l) = (r * i1) * (right_bot - left_bot);

  SymplecticBlock out;
  out.s = full.real();
  out.imag_residue = full.size() ? full.imag().cwiseAbs().maxCoeff() : 0.0;

  for (Index j = 0; j < l; ++j) {
    Index at = 0;
    out.s.col(j).cwiseAbs().maxCoeff(&at);
    if (out.s(at, j) < 0.0) {
      out.s.col(j) *= -1.0;
      out.s.col(l + j) *= -1.0;
    }
    // s_j^T J s_{l+j} with J [u; v] = [v; -u].
    const double pair = out.s.col(j).head(n).dot(out.s.col(l + j).tail(n)) -
                        out.s.col(j).tail(n).dot(out.s.col(l + j).head(n));
    if (pair != 0.0) out.s.col(l + j) /= pair;
  }
  return out;
}

SymplecticResult symplectic_eigensolve(const RMatrix& m, Index l, const SolverConfig& cfg,
                                       const Preconditioner& t) {
  const BSHProblem p = spd_to_bsh(m);
  SolverConfig run = cfg;
  run.l = l;
  if (run.k && *run.k < l) run.k.reset();

  SymplecticResult out;
  out.solution = lobpcg_solve(p, t, run);
  out.lambda = out.solution.lambda;

  SymplecticBlock block = symplectic_from_phi(out.solution.eigvecs);
  const double s_norm = block.s.cwiseAbs().maxCoeff();
  out.imag_residue = block.imag_residue;
  if (block.imag_residue > 1e-9 * s_norm)
    throw Error("symplectic_eigensolve: imaginary residue of S too large (" +
                std::to_string(block.imag_residue) + ")");
  out.s_block = std::move(block.s);

  const Index n = m.rows() / 2;
  const RMatrix& s = out.s_block;
  RMatrix js(2 * n, 2 * l);
  js.topRows(n) = s.bottomRows(n);
  js.bottomRows(n) = -s.topRows(n);
  RMatrix jl = RMatrix::Zero(2 * l, 2 * l);
  jl.topRightCorner(l, l).setIdentity();
  jl.bottomLeftCorner(l, l) = -RMatrix::Identity(l, l);
  out.j_residual = (s.transpose() * js - jl).cwiseAbs().maxCoeff();

  const RMatrix sms = s.transpose() * m * s;
  RVector target(2 * l);
  target << out.lambda, out.lambda;
  RMatrix diag = target.asDiagonal();
  out.diag_residual = (sms - diag).cwiseAbs().maxCoeff();
  const double twice_sum = 2.0 * out.lambda.sum();
  out.trace_residual = std::abs(sms.trace() - twice_sum) / twice_sum;
  return out;
}

SymplecticResult symplectic_eigensolve(const RMatrix& m, Index l, const SolverConfig& cfg,
                                       PreconditionerKind kind) {
  return symplectic_eigensolve(m, l, cfg, build_preconditioner(spd_to_bsh(m), kind));
}

double trace_min_check(const BSHProblem& p, const PhiBlockMatrix& z) {
  const PhiGramPair k = omega_gram(p, z, z);
  const double trace = 2.0 * k.k1.trace().real();
  const RitzOutput r = rayleigh_ritz(p, z);
  return std::abs(trace - 2.0 * r.theta_plus.sum());
}

}  // namespace bse
