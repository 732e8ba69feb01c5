#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bse/structured.hpp"

namespace bse {

enum class SolverMode {
  C,         // LOBPCG in the C_n inner product, no IHL
  CIhl,      // IHL in the C_n inner product
  OmegaIhl,  // IHL in the Omega inner product
  Adaptive,  // C_n IHL, switching once to Omega IHL when convergence stalls
};

/// Metric that produced an iteration.
enum class IterMetric { C, Omega };

/// Preconditioners that can be built from a problem's diagonal.
enum class PreconditionerKind { Identity, DiagA, BlockDiagAB };

std::string to_string(SolverMode mode);
std::string to_string(PreconditionerKind kind);
PreconditionerKind parse_preconditioner_kind(const std::string& text);
std::string to_string(IterMetric metric);
SolverMode parse_solver_mode(const std::string& text);

struct SolverConfig {
  Index l = 1;                  // number of wanted eigenpairs
  std::optional<Index> k;       // block width; defaults to default_block_size(l)
  double tol = 1e-14;
  int max_iter = 200;
  double tau0 = 1.49e-8;        // selective reorthogonalization cap
  double monitor_threshold = 1e-10;
  double neutral_tol = kDefaultNeutralTol;
  Index norm_sketch = 8;        // columns of the ||Omega|| sketch
  Index dense_cap = kDefaultDenseCap;
  std::uint64_t seed = 0;
  SolverMode mode = SolverMode::Adaptive;

  /// Test hook: maps (iteration, metric, true res_max) to the value used for
  /// the switch rule and stored in the history. Convergence always uses the
  /// true residual.
  std::function<double(int, IterMetric, double)> residual_hook;

  /// max(ceil(3l/2), l + 5).
  static Index default_block_size(Index l);
  Index block_size() const;
  /// Throws Error on inconsistent settings.
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double res_max = 0.0;
  std::vector<double> res;    // per wanted pair
  std::vector<double> ritz;   // current k Ritz values, ascending
  IterMetric metric = IterMetric::C;
  bool reorth = false;
  std::vector<std::string> events;
  double wall_ms = 0.0;
};

struct ConvergenceHistory {
  std::vector<IterationRecord> records;
  std::optional<int> switch_iteration;

  std::vector<double> res_max_series() const;
};

/// T ~= Omega^{-1}, applied blockwise to structured residuals.
class Preconditioner {
 public:
  enum class Kind { Identity, DiagA, BlockDiagAB, User };
  using Fn = std::function<PhiBlockMatrix(const PhiBlockMatrix&)>;

  Preconditioner() = default;
  static Preconditioner identity();
  /// W = R / diag(A); throws Error if a diagonal entry is (numerically) zero.
  static Preconditioner diag_a(const RVector& d, double scale);
  /// Per index i solves [a_i b_i; conj(b_i) a_i] w = r; throws Error if singular.
  static Preconditioner block_diag_ab(const RVector& a, const CVector& b, double scale);
  static Preconditioner user(Fn fn);

  Kind kind() const noexcept { return kind_; }
  PhiBlockMatrix apply(const PhiBlockMatrix& r) const;

 private:
  Kind kind_ = Kind::Identity;
  RVector d_;
  RVector inv_a_;   // a_i / det_i
  CVector inv_b_;   // b_i / det_i
  Fn fn_;
};

PhiBlockMatrix apply_preconditioner(const Preconditioner& t, const PhiBlockMatrix& r);

struct ResidualSet {
  PhiBlockMatrix r;  // Omega Z - C_n Z Phi(Theta, 0), first block half
  RVector res;       // relative residuals
};

/// res_i = ||r_i|| / ((||Omega||_est + theta_i) ||z_i||).
ResidualSet compute_residuals(const BSHProblem& p, const PhiBlockMatrix& z, const RVector& theta,
                              double omega_norm);
ResidualSet compute_residuals(const BSHProblem& p, const PhiBlockMatrix& z, const RVector& theta);

/// (log10 r_k - log10 r_{k-p}) / p over the last p steps; nullopt while
/// fewer than p + 1 values are available.
std::optional<double> slope(std::span<const double> res_max, int p);
std::optional<double> slope(const ConvergenceHistory& history, int p);

/// Switch rule, evaluated once the monitor has latched (some res_max below
/// `monitor_threshold`): the latest value exceeds both predecessors or the
/// short slope is flatter than half the long slope.
bool switch_decision(std::span<const double> res_max, double monitor_threshold = 1e-10);
bool switch_decision(const ConvergenceHistory& history, double monitor_threshold = 1e-10);

struct Solution {
  RVector lambda;            // l smallest positive eigenvalues, ascending
  PhiBlockMatrix eigvecs;    // C_n-normalized
  RVector residuals;
  bool converged = false;
  int iterations = 0;
  Index block_size = 0;
  bool dense_path = false;
  ConvergenceHistory history;
};

/// Block LOBPCG/IHL eigensolver for the l smallest positive eigenvalues of
/// H = C_n Omega. `x0` is an optional initial block Phi(X0, Y0) of width k;
/// a seeded Gaussian block is used otherwise.
Solution lobpcg_solve(const BSHProblem& p, const Preconditioner& t, const SolverConfig& cfg,
                      const std::optional<PhiBlockMatrix>& x0 = std::nullopt);

/// Same as lobpcg_solve with mode forced to Adaptive.
Solution adaptive_solve(const BSHProblem& p, const Preconditioner& t, const SolverConfig& cfg,
                        const std::optional<PhiBlockMatrix>& x0 = std::nullopt);

}  // namespace bse
