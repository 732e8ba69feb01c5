#include "bse/structured.hpp"

#include <map>
#include <mutex>
#include <random>
#include <string>
#include <utility>

namespace bse {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace

// ---------------------------------------------------------------------------
// PhiBlockMatrix

PhiBlockMatrix::PhiBlockMatrix(CMatrix x, CMatrix y) : x_(std::move(x)), y_(std::move(y)) {
  require(x_.rows() == y_.rows() && x_.cols() == y_.cols(),
          "PhiBlockMatrix: generator blocks differ in shape");
}

PhiBlockMatrix PhiBlockMatrix::zeros(Index n, Index k) {
  return {CMatrix::Zero(n, k), CMatrix::Zero(n, k)};
}

PhiBlockMatrix PhiBlockMatrix::identity(Index n, Index k) {
  return {CMatrix::Identity(n, k), CMatrix::Zero(n, k)};
}

PhiBlockMatrix PhiBlockMatrix::blocks(Index start, Index count) const {
  require(start >= 0 && count >= 0 && start + count <= cols(), "PhiBlockMatrix::blocks: out of range");
  return {x_.middleCols(start, count), y_.middleCols(start, count)};
}

PhiBlockMatrix PhiBlockMatrix::row_blocks(Index start, Index count) const {
  require(start >= 0 && count >= 0 && start + count <= rows(),
          "PhiBlockMatrix::row_blocks: out of range");
  return {x_.middleRows(start, count), y_.middleRows(start, count)};
}

void PhiBlockMatrix::set_block(Index j, const CVector& x, const CVector& y) {
  require(x.size() == rows() && y.size() == rows(), "PhiBlockMatrix::set_block: length mismatch");
  x_.col(j) = x;
  y_.col(j) = y;
}

void PhiBlockMatrix::scale_block(Index j, double s) {
  x_.col(j) *= s;
  y_.col(j) *= s;
}

PhiBlockMatrix PhiBlockMatrix::hcat(std::initializer_list<const PhiBlockMatrix*> parts) {
  Index n = -1;
  Index k = 0;
  for (const auto* part : parts) {
    if (part->empty()) continue;
    if (n < 0) n = part->rows();
    require(part->rows() == n, "PhiBlockMatrix::hcat: row mismatch");
    k += part->cols();
  }
  if (n < 0) n = parts.size() ? (*parts.begin())->rows() : 0;
  CMatrix x(n, k), y(n, k);
  Index at = 0;
  for (const auto* part : parts) {
    if (part->empty()) continue;
    x.middleCols(at, part->cols()) = part->x();
    y.middleCols(at, part->cols()) = part->y();
    at += part->cols();
  }
  return {std::move(x), std::move(y)};
}

PhiBlockMatrix PhiBlockMatrix::adjoint() const { return {x_.adjoint(), y_.transpose()}; }

double PhiBlockMatrix::max_abs() const { return std::max(bse::max_abs(x_), bse::max_abs(y_)); }

CMatrix phi_assemble(const PhiBlockMatrix& u) {
  const Index n = u.rows();
  const Index k = u.cols();
  CMatrix full(2 * n, 2 * k);
  full.topLeftCorner(n, k) = u.x();
  full.topRightCorner(n, k) = u.y().conjugate();
  full.bottomLeftCorner(n, k) = u.y();
  full.bottomRightCorner(n, k) = u.x().conjugate();
  return full;
}

CMatrix CGramPair::assemble() const {
  CMatrix full(2 * g1.rows(), 2 * g1.cols());
  full << g1, g2, -g2.conjugate(), -g1.conjugate();
  return full;
}

CMatrix PhiGramPair::assemble() const {
  CMatrix full(2 * k1.rows(), 2 * k1.cols());
  full << k1, k2, k2.conjugate(), k1.conjugate();
  return full;
}

PhiBlockMatrix PhiGramPair::as_phi() const { return {k1, k2.conjugate()}; }

CMatrix c_metric(Index k) {
  CMatrix c = CMatrix::Identity(2 * k, 2 * k);
  c.bottomRightCorner(k, k) *= -1.0;
  return c;
}

// ---------------------------------------------------------------------------
// BSHProblem

struct BSHProblem::NormCache {
  std::mutex mutex;
  std::map<std::pair<Index, std::uint64_t>, double> values;
};

double validation_tolerance(const CMatrix& a) { return 1e-12 * std::max(1.0, max_abs(a)); }

BSHProblem::BSHProblem(CMatrix a, CMatrix b, bool validate)
    : n_(a.rows()), dense_(true), a_(std::move(a)), b_(std::move(b)),
      cache_(std::make_shared<NormCache>()) {
  require(a_.rows() == a_.cols(), "BSHProblem: A is not square");
  require(b_.rows() == b_.cols(), "BSHProblem: B is not square");
  require(a_.rows() == b_.rows(), "BSHProblem: A and B differ in dimension");
  if (validate) {
    const double tol = validation_tolerance(a_);
    const double herm = max_abs(a_ - a_.adjoint());
    if (herm > tol)
      throw SymmetryError("BSHProblem: A is not Hermitian (||A - A^H||_max = " +
                          std::to_string(herm) + ")");
    const double sym = max_abs(b_ - b_.transpose());
    if (sym > tol)
      throw SymmetryError("BSHProblem: B is not symmetric (||B - B^T||_max = " +
                          std::to_string(sym) + ")");
  }
}

BSHProblem BSHProblem::from_operator(Index n, OmegaOperator op, std::optional<RVector> diag_a,
                                     std::optional<CVector> diag_b) {
  require(n >= 1, "BSHProblem::from_operator: n must be positive");
  require(static_cast<bool>(op), "BSHProblem::from_operator: empty operator");
  require(!diag_a || diag_a->size() == n, "BSHProblem::from_operator: diag_a length");
  require(!diag_b || diag_b->size() == n, "BSHProblem::from_operator: diag_b length");
  BSHProblem p;
  p.n_ = n;
  p.dense_ = false;
  p.op_ = std::move(op);
  p.op_diag_a_ = std::move(diag_a);
  p.op_diag_b_ = std::move(diag_b);
  p.cache_ = std::make_shared<NormCache>();
  return p;
}

const CMatrix& BSHProblem::a_block() const {
  if (!dense_) throw Error("BSHProblem: dense A requested from an operator-only problem");
  return a_;
}

const CMatrix& BSHProblem::b_block() const {
  if (!dense_) throw Error("BSHProblem: dense B requested from an operator-only problem");
  return b_;
}

std::optional<RVector> BSHProblem::diag_a() const {
  if (dense_) return RVector(a_.diagonal().real());
  return op_diag_a_;
}

std::optional<CVector> BSHProblem::diag_b() const {
  if (dense_) return CVector(b_.diagonal());
  return op_diag_b_;
}

CMatrix BSHProblem::omega_dense() const {
  const CMatrix& a = a_block();
  const CMatrix& b = b_block();
  CMatrix omega(2 * n_, 2 * n_);
  omega << a, b, b.conjugate(), a.conjugate();
  return omega;
}

PhiBlockMatrix BSHProblem::apply(const PhiBlockMatrix& u) const {
  require(u.rows() == n_, "omega_apply: row dimension does not match n");
  if (!dense_) {
    PhiBlockMatrix v = op_(u);
    require(v.rows() == n_ && v.cols() == u.cols(), "omega_apply: operator returned wrong shape");
    return v;
  }
  CMatrix vx = a_ * u.x();
  vx.noalias() += b_ * u.y();
  CMatrix vy = b_.conjugate() * u.x();
  vy.noalias() += a_.conjugate() * u.y();
  return {std::move(vx), std::move(vy)};
}

std::optional<double> BSHProblem::cached_norm(Index t, std::uint64_t seed) const {
  if (!cache_) return std::nullopt;
  std::lock_guard lock(cache_->mutex);
  auto it = cache_->values.find({t, seed});
  if (it == cache_->values.end()) return std::nullopt;
  return it->second;
}

void BSHProblem::store_norm(Index t, std::uint64_t seed, double value) const {
  if (!cache_) return;
  std::lock_guard lock(cache_->mutex);
  cache_->values.emplace(std::make_pair(t, seed), value);
}

// ---------------------------------------------------------------------------
// Structured products

PhiBlockMatrix omega_apply(const BSHProblem& p, const PhiBlockMatrix& u) { return p.apply(u); }

CGramPair c_gram(const PhiBlockMatrix& u, const PhiBlockMatrix& v) {
  require(u.rows() == v.rows(), "c_gram: row dimension mismatch");
  CGramPair g;
  g.g1 = u.x().adjoint() * v.x();
  g.g1.noalias() -= u.y().adjoint() * v.y();
  g.g2 = u.x().adjoint() * v.y().conjugate();
  g.g2.noalias() -= u.y().adjoint() * v.x().conjugate();
  return g;
}

PhiGramPair omega_gram(const BSHProblem& p, const PhiBlockMatrix& u, const PhiBlockMatrix& v) {
  require(u.rows() == v.rows(), "omega_gram: row dimension mismatch");
  const PhiBlockMatrix w = p.apply(v);
  PhiGramPair g;
  g.k1 = u.x().adjoint() * w.x();
  g.k1.noalias() += u.y().adjoint() * w.y();
  g.k2 = u.x().adjoint() * w.y().conjugate();
  g.k2.noalias() += u.y().adjoint() * w.x().conjugate();
  return g;
}

PhiBlockMatrix phi_product(const PhiBlockMatrix& u, const PhiBlockMatrix& v) {
  require(u.cols() == v.rows(), "phi_product: inner dimensions do not match");
  CMatrix wx = u.x() * v.x();
  wx.noalias() += u.y().conjugate() * v.y();
  CMatrix wy = u.y() * v.x();
  wy.noalias() += u.x().conjugate() * v.y();
  return {std::move(wx), std::move(wy)};
}

PhiBlockMatrix phi_adjoint_product(const PhiBlockMatrix& u, const PhiBlockMatrix& v) {
  require(u.rows() == v.rows(), "phi_adjoint_product: row dimension mismatch");
  CMatrix wx = u.x().adjoint() * v.x();
  wx.noalias() += u.y().adjoint() * v.y();
  CMatrix wy = u.y().transpose() * v.x();
  wy.noalias() += u.x().transpose() * v.y();
  return {std::move(wx), std::move(wy)};
}

double estimate_omega_norm(const BSHProblem& p, Index t, std::uint64_t seed) {
  require(t >= 1, "estimate_omega_norm: sketch width must be positive");
  if (auto cached = p.cached_norm(t, seed)) return *cached;

  // Complex standard Gaussian: real and imaginary parts N(0, 1/2).
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  const Index n = p.n();
  CMatrix gx(n, t), gy(n, t);
  for (Index j = 0; j < t; ++j)
    for (Index i = 0; i < n; ++i) gx(i, j) = {normal(rng), normal(rng)};
  for (Index j = 0; j < t; ++j)
    for (Index i = 0; i < n; ++i) gy(i, j) = {normal(rng), normal(rng)};

  // The first block column of Phi(gx, gy) is the full Gaussian [gx; gy].
  const PhiBlockMatrix w = p.apply(PhiBlockMatrix(gx, gy));
  const double num = std::sqrt(w.x().squaredNorm() + w.y().squaredNorm());
  const double den = std::sqrt(gx.squaredNorm() + gy.squaredNorm());
  const double value = den > 0.0 ? num / den : 0.0;
  p.store_norm(t, seed, value);
  return *p.cached_norm(t, seed);
}

RMatrix phi_to_real(const PhiBlockMatrix& u) {
  const Index n = u.rows();
  const Index k = u.cols();
  const CMatrix sum = u.x() + u.y();
  const CMatrix diff = u.x() - u.y();
  RMatrix s(2 * n, 2 * k);
  s.topLeftCorner(n, k) = sum.real();
  s.topRightCorner(n, k) = sum.imag();
  s.bottomLeftCorner(n, k) = -diff.imag();
  s.bottomRightCorner(n, k) = diff.real();
  return s;
}

PhiBlockMatrix real_to_phi(const RMatrix& s) {
  require(s.rows() % 2 == 0 && s.cols() % 2 == 0, "real_to_phi: dimensions must be even");
  const Index n = s.rows() / 2;
  const Index k = s.cols() / 2;
  const RMatrix s11 = s.topLeftCorner(n, k);
  const RMatrix s12 = s.topRightCorner(n, k);
  const RMatrix s21 = s.bottomLeftCorner(n, k);
  const RMatrix s22 = s.bottomRightCorner(n, k);
  CMatrix x(n, k), y(n, k);
  x.real() = 0.5 * (s11 + s22);
  x.imag() = 0.5 * (s12 - s21);
  y.real() = 0.5 * (s11 - s22);
  y.imag() = 0.5 * (s12 + s21);
  return {std::move(x), std::move(y)};
}

}  // namespace bse
