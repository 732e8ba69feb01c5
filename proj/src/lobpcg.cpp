#include "bse/lobpcg.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "bse/dense_bse.hpp"
#include "bse/ihl.hpp"
#include "bse/ortho.hpp"

namespace bse {

std::string to_string(SolverMode mode) {
  switch (mode) {
    case SolverMode::C: return "C";
    case SolverMode::CIhl: return "CIHL";
    case SolverMode::OmegaIhl: return "OMEGA_IHL";
    case SolverMode::Adaptive: return "ADAPTIVE";
  }
  return "?";
}

std::string to_string(PreconditionerKind kind) {
  switch (kind) {
    case PreconditionerKind::Identity: return "identity";
    case PreconditionerKind::DiagA: return "diag-a";
    case PreconditionerKind::BlockDiagAB: return "block-diag-ab";
  }
  return "?";
}

PreconditionerKind parse_preconditioner_kind(const std::string& text) {
  std::string low;
  for (char c : text) low.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "identity") return PreconditionerKind::Identity;
  if (low == "diag-a") return PreconditionerKind::DiagA;
  if (low == "block-diag-ab") return PreconditionerKind::BlockDiagAB;
  throw Error("unknown preconditioner '" + text + "'");
}

std::string to_string(IterMetric metric) { return metric == IterMetric::C ? "C" : "OMEGA"; }

SolverMode parse_solver_mode(const std::string& text) {
  std::string up;
  for (char c : text) up.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "C") return SolverMode::C;
  if (up == "CIHL") return SolverMode::CIhl;
  if (up == "OMEGA_IHL" || up == "OMEGAIHL") return SolverMode::OmegaIhl;
  if (up == "ADAPTIVE") return SolverMode::Adaptive;
  throw Error("unknown solver mode '" + text + "'");
}

Index SolverConfig::default_block_size(Index l) { return std::max((3 * l + 1) / 2, l + 5); }

Index SolverConfig::block_size() const { return k ? *k : default_block_size(l); }

void SolverConfig::validate() const {
  if (l < 1) throw Error("SolverConfig: l must be at least 1");
  if (block_size() < l) throw Error("SolverConfig: k must be at least l");
  if (!(tol > 0.0)) throw Error("SolverConfig: tol must be positive");
  if (max_iter < 1) throw Error("SolverConfig: max_iter must be at least 1");
  if (!(tau0 > 0.0)) throw Error("SolverConfig: tau0 must be positive");
  if (!(neutral_tol > 0.0)) throw Error("SolverConfig: neutral_tol must be positive");
  if (norm_sketch < 1) throw Error("SolverConfig: norm_sketch must be at least 1");
}

std::vector<double> ConvergenceHistory::res_max_series() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.res_max);
  return out;
}

// ---------------------------------------------------------------------------
// Preconditioners

Preconditioner Preconditioner::identity() { return {}; }

Preconditioner Preconditioner::diag_a(const RVector& d, double scale) {
  for (Index i = 0; i < d.size(); ++i)
    if (!(std::abs(d(i)) >= kUnitRoundoff * scale))
      throw Error("diag_a preconditioner: singular diagonal entry at index " + std::to_string(i));
  Preconditioner t;
  t.kind_ = Kind::DiagA;
  t.d_ = d;
  return t;
}

Preconditioner Preconditioner::block_diag_ab(const RVector& a, const CVector& b, double scale) {
  if (a.size() != b.size()) throw DimensionError("block_diag_ab preconditioner: length mismatch");
  Preconditioner t;
  t.kind_ = Kind::BlockDiagAB;
  t.inv_a_.resize(a.size());
  t.inv_b_.resize(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    const double det = a(i) * a(i) - std::norm(b(i));
    if (!(std::abs(det) >= kUnitRoundoff * scale * scale))
      throw Error("block_diag_ab preconditioner: singular 2x2 block at index " + std::to_string(i));
    t.inv_a_(i) = a(i) / det;
    t.inv_b_(i) = b(i) / det;
  }
  return t;
}

Preconditioner Preconditioner::user(Fn fn) {
  if (!fn) throw Error("user preconditioner: empty operator");
  Preconditioner t;
  t.kind_ = Kind::User;
  t.fn_ = std::move(fn);
  return t;
}

PhiBlockMatrix Preconditioner::apply(const PhiBlockMatrix& r) const {
  switch (kind_) {
    case Kind::Identity:
      return r;
    case Kind::DiagA: {
      if (d_.size() != r.rows()) throw DimensionError("preconditioner: dimension mismatch");
      const RVector inv = d_.cwiseInverse();
      return {inv.asDiagonal() * r.x(), inv.asDiagonal() * r.y()};
    }
    case Kind::BlockDiagAB: {
      if (inv_a_.size() != r.rows()) throw DimensionError("preconditioner: dimension mismatch");
      CMatrix wx = inv_a_.asDiagonal() * r.x();
      wx.noalias() -= inv_b_.asDiagonal() * r.y();
      CMatrix wy = inv_a_.asDiagonal() * r.y();
      wy.noalias() -= inv_b_.conjugate().asDiagonal() * r.x();
      return {std::move(wx), std::move(wy)};
    }
    case Kind::User: {
      PhiBlockMatrix w = fn_(r);
      if (w.rows() != r.rows() || w.cols() != r.cols())
        throw DimensionError("preconditioner: user operator returned wrong shape");
      return w;
    }
  }
  return r;
}

PhiBlockMatrix apply_preconditioner(const Preconditioner& t, const PhiBlockMatrix& r) { return t.apply(r); }

// ---------------------------------------------------------------------------
// Residuals and the switch rule

ResidualSet compute_residuals(const BSHProblem& p, const PhiBlockMatrix& z, const RVector& theta,
                              double omega_norm) {
  if (theta.size() != z.cols()) throw DimensionError("compute_residuals: theta length mismatch");
  const PhiBlockMatrix oz = p.apply(z);
  CMatrix rx = oz.x() - z.x() * theta.asDiagonal();
  CMatrix ry = oz.y() + z.y() * theta.asDiagonal();
  ResidualSet out;
  out.res.resize(z.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    const double rn = std::sqrt(rx.col(j).squaredNorm() + ry.col(j).squaredNorm());
    const double zn = std::sqrt(z.x().col(j).squaredNorm() + z.y().col(j).squaredNorm());
    out.res(j) = rn / ((omega_norm + theta(j)) * zn);
  }
  out.r = PhiBlockMatrix(std::move(rx), std::move(ry));
  return out;
}

ResidualSet compute_residuals(const BSHProblem& p, const PhiBlockMatrix& z, const RVector& theta) {
  const Index t = std::min<Index>(8, 2 * p.n());
  return compute_residuals(p, z, theta, estimate_omega_norm(p, t, 0));
}

std::optional<double> slope(std::span<const double> res_max, int p) {
  if (p < 1 || res_max.size() < static_cast<std::size_t>(p) + 1) return std::nullopt;
  const double now = res_max[res_max.size() - 1];
  const double then = res_max[res_max.size() - 1 - static_cast<std::size_t>(p)];
  if (!(now > 0.0) || !(then > 0.0)) return std::nullopt;
  return (std::log10(now) - std::log10(then)) / p;
}

std::optional<double> slope(const ConvergenceHistory& history, int p) {
  const auto series = history.res_max_series();
  return slope(std::span<const double>(series), p);
}

bool switch_decision(std::span<const double> res_max, double monitor_threshold) {
  const bool gate = std::any_of(res_max.begin(), res_max.end(), [&](double r) { return r < monitor_threshold; });
  if (!gate) return false;
  const std::size_t n = res_max.size();
  if (n >= 3 && res_max[n - 1] > std::max(res_max[n - 2], res_max[n - 3])) return true;
  const auto s5 = slope(res_max, 5);
  const auto s10 = slope(res_max, 10);
  return s5 && s10 && *s5 > *s10 / 2.0;
}

bool switch_decision(const ConvergenceHistory& history, double monitor_threshold) {
  const auto series = history.res_max_series();
  return switch_decision(std::span<const double>(series), monitor_threshold);
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

PhiBlockMatrix gaussian_block(Index n, Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  CMatrix x(n, k), y(n, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = {normal(rng), normal(rng)};
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < n; ++i) y(i, j) = {normal(rng), normal(rng)};
  return {std::move(x), std::move(y)};
}

class Driver {
 public:
  Driver(const BSHProblem& p, const Preconditioner& t, const SolverConfig& cfg, SolverMode mode)
      : p_(p), t_(t), cfg_(cfg), mode_(mode), start_(std::chrono::steady_clock::now()) {}

  Solution run(const std::optional<PhiBlockMatrix>& x0);

 private:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

  Solution dense_solution();
  void initialize(const PhiBlockMatrix& block);
  void omega_fallback(const PhiBlockMatrix& basis);
  void switch_to_omega();
  bool step(const PhiBlockMatrix& w, int iteration, double res_max);
  bool step_c(const PhiBlockMatrix& w);
  bool step_cihl(const PhiBlockMatrix& w, int iteration, double res_max);
  bool step_omega(const PhiBlockMatrix& w, double res_max);
  PhiBlockMatrix c_normalized_z() const;

  const BSHProblem& p_;
  const Preconditioner& t_;
  const SolverConfig& cfg_;
  SolverMode mode_;
  std::chrono::steady_clock::time_point start_;

  Index k_ = 0;
  double omega_norm_ = 0.0;
  IterMetric metric_ = IterMetric::C;
  PhiBlockMatrix z_;
  PhiBlockMatrix pblk_;
  RVector theta_;
  std::vector<std::string> events_;
};

Solution Driver::dense_solution() {
  Solution sol;
  sol.dense_path = true;
  sol.block_size = 0;
  const StructuredSpectrum spec = dense_bse_solve(p_, cfg_.dense_cap);
  const Index l = cfg_.l;
  sol.lambda = spec.lambda_plus.head(l);
  sol.eigvecs = spec.eigvecs.blocks(0, l);
  const double norm = estimate_omega_norm(p_, std::min<Index>(cfg_.norm_sketch, 2 * p_.n()), cfg_.seed);
  sol.residuals = compute_residuals(p_, sol.eigvecs, sol.lambda, norm).res;
  IterationRecord rec;
  rec.res_max = sol.residuals.maxCoeff();
  rec.res.assign(sol.residuals.data(), sol.residuals.data() + l);
  rec.ritz.assign(sol.lambda.data(), sol.lambda.data() + l);
  rec.events.push_back("dense_path");
  rec.wall_ms = elapsed_ms();
  sol.converged = rec.res_max <= cfg_.tol;
  sol.history.records.push_back(std::move(rec));
  return sol;
}

// Ritz vectors of an Omega-orthonormal basis, rescaled to C_n-norm one.
void Driver::omega_fallback(const PhiBlockMatrix& basis) {
  // Blocks that do not survive projection against the earlier ones are dropped.
  const PhiBlockMatrix u = omega_orthonormalize_deflating(p_, basis).first;
  if (u.cols() < k_) throw Error("irrecoverable breakdown: Omega fallback lost rank");
  const RitzOutput r = rayleigh_ritz_omega(u);
  z_ = phi_product(u, r.v_matrix.blocks(0, k_));
  theta_ = r.theta_plus.head(k_);
  for (Index j = 0; j < k_; ++j) z_.scale_block(j, std::sqrt(theta_(j)));
  pblk_ = PhiBlockMatrix::zeros(p_.n(), 0);
  events_.push_back("omega_fallback");
}

void Driver::initialize(const PhiBlockMatrix& block) {
  if (metric_ == IterMetric::Omega) {
    const PhiBlockMatrix u = omega_orthonormalize(p_, block).first;
    const RitzOutput r = rayleigh_ritz_omega(u);
    z_ = phi_product(u, r.v_matrix);
    theta_ = r.theta_plus;
    pblk_ = PhiBlockMatrix::zeros(p_.n(), 0);
    return;
  }
  try {
    const PhiBlockMatrix u = c_orthonormalize_cgs(block, 2, cfg_.neutral_tol).first;
    const RitzOutput r = rayleigh_ritz(p_, u, cfg_.dense_cap);
    z_ = phi_product(u, r.v_matrix);
    theta_ = r.theta_plus;
    pblk_ = PhiBlockMatrix::zeros(p_.n(), 0);
  } catch (const BreakdownError&) {
    omega_fallback(block);
  } catch (const NotDefiniteError&) {
    omega_fallback(block);
  }
}

void Driver::switch_to_omega() {
  PhiBlockMatrix zo = z_;
  for (Index j = 0; j < k_; ++j) zo.scale_block(j, 1.0 / std::sqrt(theta_(j)));
  const PhiBlockMatrix u = omega_orthonormalize(p_, zo).first;
  const RitzOutput r = rayleigh_ritz_omega(u);
  z_ = phi_product(u, r.v_matrix);
  theta_ = r.theta_plus;
  pblk_ = PhiBlockMatrix::zeros(p_.n(), 0);
  metric_ = IterMetric::Omega;
}

bool Driver::step_c(const PhiBlockMatrix& w) {
  const PhiBlockMatrix basis = PhiBlockMatrix::hcat({&z_, &pblk_, &w});
  const PhiBlockMatrix u = c_orthonormalize_cgs(basis, 2, cfg_.neutral_tol).first;
  const RitzOutput r = rayleigh_ritz(p_, u, cfg_.dense_cap);
  const PhiBlockMatrix v1 = r.v_matrix.blocks(0, k_);
  const Index m = u.cols();
  z_ = phi_product(u, v1);
  pblk_ = phi_product(u.blocks(k_, m - k_), v1.row_blocks(k_, m - k_));
  theta_ = r.theta_plus.head(k_);
  return false;
}

bool Driver::step_cihl(const PhiBlockMatrix& w, int iteration, double res_max) {
  const PhiBlockMatrix zp = PhiBlockMatrix::hcat({&z_, &pblk_});
  PhiBlockMatrix w1 = w;
  for (int round = 0; round < 2; ++round) {
    w1 = c_project_against(w1, zp);
    w1 = svqb_deflating(w1, true, cfg_.neutral_tol).first;
    if (w1.empty()) break;
    const CGramPair cross = c_gram(zp, w1);
    const double loss = std::max(cross.g1.cwiseAbs().maxCoeff(), cross.g2.cwiseAbs().maxCoeff());
    const double scale = std::sqrt((zp.x().squaredNorm() + zp.y().squaredNorm()) *
                                   (w1.x().squaredNorm() + w1.y().squaredNorm()));
    if (loss <= 10.0 * kUnitRoundoff * scale) break;
  }
  const PhiBlockMatrix u = PhiBlockMatrix::hcat({&zp, &w1});
  const RitzOutput r = rayleigh_ritz(p_, u, cfg_.dense_cap);
  IhlBases bases = ihl_update_c(u, r, k_, cfg_.neutral_tol);
  if (bases.completed) events_.push_back("ihl_completion");
  const ReorthCheck check =
      selective_reorth_needed(bases, mix_seed(cfg_.seed, static_cast<std::uint64_t>(iteration)), cfg_.tau0, res_max);
  if (check.needed) reorthogonalize(bases, cfg_.neutral_tol);
  z_ = std::move(bases.z);
  pblk_ = std::move(bases.p);
  theta_ = r.theta_plus.head(k_);
  return check.needed;
}

bool Driver::step_omega(const PhiBlockMatrix& w, double res_max) {
  bool reorth = false;
  PhiBlockMatrix zp = PhiBlockMatrix::hcat({&z_, &pblk_});
  const PhiGramPair g = omega_gram(p_, zp, zp);
  const double loss = std::max((g.k1 - CMatrix::Identity(zp.cols(), zp.cols())).cwiseAbs().maxCoeff(),
                               g.k2.cwiseAbs().maxCoeff());
  if (!(loss < std::min(cfg_.tau0, 0.1 * res_max))) {
    zp = omega_orthonormalize(p_, zp).first;
    reorth = true;
  }
  const PhiBlockMatrix w1 = omega_orthonormalize_deflating(p_, w, zp).first;
  const PhiBlockMatrix u = PhiBlockMatrix::hcat({&zp, &w1});
  const RitzOutput r = rayleigh_ritz_omega(u);
  IhlBases bases = ihl_update_omega(p_, u, r, k_);
  z_ = std::move(bases.z);
  pblk_ = std::move(bases.p);
  theta_ = r.theta_plus.head(k_);
  return reorth;
}

bool Driver::step(const PhiBlockMatrix& w, int iteration, double res_max) {
  if (metric_ == IterMetric::Omega) return step_omega(w, res_max);
  const PhiBlockMatrix z_prev = z_;
  const PhiBlockMatrix p_prev = pblk_;
  try {
    if (mode_ == SolverMode::C) return step_c(w);
    return step_cihl(w, iteration, res_max);
  } catch (const BreakdownError& e) {
    events_.push_back(std::string("breakdown: ") + e.what());
  } catch (const NotDefiniteError& e) {
    events_.push_back(std::string("not definite: ") + e.what());
  }
  omega_fallback(PhiBlockMatrix::hcat({&z_prev, &p_prev, &w}));
  return false;
}

PhiBlockMatrix Driver::c_normalized_z() const {
  PhiBlockMatrix z = z_.blocks(0, cfg_.l);
  if (metric_ == IterMetric::Omega)
    for (Index j = 0; j < cfg_.l; ++j) z.scale_block(j, std::sqrt(theta_(j)));
  return z;
}

Solution Driver::run(const std::optional<PhiBlockMatrix>& x0) {
  cfg_.validate();
  const Index n = p_.n();
  const Index l = cfg_.l;
  if (x0) {
    if (x0->rows() != n) throw DimensionError("lobpcg_solve: initial block has wrong row dimension");
    k_ = x0->cols();
    if (k_ < l) throw DimensionError("lobpcg_solve: initial block narrower than l");
    if (3 * k_ > n) throw DimensionError("lobpcg_solve: initial block too wide for n (need 3k <= n)");
  } else {
    k_ = std::min(cfg_.block_size(), n / 3);
    if (k_ < l) return dense_solution();
  }

  omega_norm_ = estimate_omega_norm(p_, std::min<Index>(cfg_.norm_sketch, 2 * n), cfg_.seed);
  metric_ = mode_ == SolverMode::OmegaIhl ? IterMetric::Omega : IterMetric::C;
  initialize(x0 ? *x0 : gaussian_block(n, k_, mix_seed(cfg_.seed, 0xB10C)));

  Solution sol;
  sol.block_size = k_;
  ConvergenceHistory& hist = sol.history;
  std::vector<double> series;
  for (int it = 0;; ++it) {
    ResidualSet rs = compute_residuals(p_, z_, theta_, omega_norm_);
    const double true_max = rs.res.head(l).maxCoeff();

    IterationRecord rec;
    rec.iteration = it;
    rec.res_max = cfg_.residual_hook ? cfg_.residual_hook(it, metric_, true_max) : true_max;
    rec.res.assign(rs.res.data(), rs.res.data() + l);
    rec.ritz.assign(theta_.data(), theta_.data() + k_);
    rec.metric = metric_;
    rec.events = std::move(events_);
    events_.clear();
    rec.wall_ms = elapsed_ms();
    series.push_back(rec.res_max);
    hist.records.push_back(std::move(rec));

    sol.iterations = it;
    if (true_max <= cfg_.tol) {
      sol.converged = true;
      break;
    }
    if (it >= cfg_.max_iter) break;

    if (mode_ == SolverMode::Adaptive && metric_ == IterMetric::C &&
        switch_decision(std::span<const double>(series), cfg_.monitor_threshold)) {
      switch_to_omega();
      hist.switch_iteration = it;
      hist.records.back().events.push_back("switch");
      // The residual block belongs to the old Z; recompute it for the new basis.
      rs = compute_residuals(p_, z_, theta_, omega_norm_);
    }

    const PhiBlockMatrix w = t_.apply(rs.r);
    hist.records.back().reorth = step(w, it, true_max);
  }

  sol.lambda = theta_.head(l);
  sol.eigvecs = c_normalized_z();
  sol.residuals = compute_residuals(p_, sol.eigvecs, sol.lambda, omega_norm_).res;
  return sol;
}

}  // namespace

Solution lobpcg_solve(const BSHProblem& p, const Preconditioner& t, const SolverConfig& cfg,
                      const std::optional<PhiBlockMatrix>& x0) {
  Driver driver(p, t, cfg, cfg.mode);
  return driver.run(x0);
}

Solution adaptive_solve(const BSHProblem& p, const Preconditioner& t, const SolverConfig& cfg,
                        const std::optional<PhiBlockMatrix>& x0) {
  Driver driver(p, t, cfg, SolverMode::Adaptive);
  return driver.run(x0);
}

}  // namespace bse
