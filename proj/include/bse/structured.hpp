#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <vector>

#include "bse/types.hpp"

namespace bse {

/// A 2n x 2k matrix of the form
///
///     Phi(X, Y) = [ X  conj(Y) ]
///                 [ Y  conj(X) ]
///
/// stored through its two n x k generators. Column j of the assembled matrix
/// and column k + j form the j-th structured block.
class PhiBlockMatrix {
 public:
  PhiBlockMatrix() = default;
  PhiBlockMatrix(CMatrix x, CMatrix y);

  static PhiBlockMatrix zeros(Index n, Index k);
  /// Phi([I_k; 0], 0), the first k coordinate blocks of C^{2n}.
  static PhiBlockMatrix identity(Index n, Index k);

  Index rows() const noexcept { return x_.rows(); }
  Index cols() const noexcept { return x_.cols(); }
  bool empty() const noexcept { return x_.cols() == 0; }

  const CMatrix& x() const noexcept { return x_; }
  const CMatrix& y() const noexcept { return y_; }

  /// Blocks [start, start + count) as a new structured matrix.
  PhiBlockMatrix blocks(Index start, Index count) const;
  /// Generator rows [start, start + count); the result is again Phi-shaped.
  PhiBlockMatrix row_blocks(Index start, Index count) const;

  void set_block(Index j, const CVector& x, const CVector& y);
  void scale_block(Index j, double s);

  /// Horizontal concatenation [A, B, ...] in block order. Empty parts are skipped.
  static PhiBlockMatrix hcat(std::initializer_list<const PhiBlockMatrix*> parts);

  /// Phi(X, Y)^H = Phi(X^H, Y^T).
  PhiBlockMatrix adjoint() const;

  double max_abs() const;

 private:
  CMatrix x_;
  CMatrix y_;
};

/// Full 2n x 2k matrix. Only used by tests, oracles and diagnostics.
CMatrix phi_assemble(const PhiBlockMatrix& u);

/// Generators (G1, G2) of U^H C_n V = [ G1 G2 ; -conj(G2) -conj(G1) ].
struct CGramPair {
  CMatrix g1;
  CMatrix g2;

  Index size() const noexcept { return g1.rows(); }
  CMatrix assemble() const;
};

/// Generators of a projected Omega, U^H Omega V = [ K1 K2 ; conj(K2) conj(K1) ].
/// The pair has the same layout as the (A, B) blocks of a BSH problem, so for
/// U = V it can be handed straight to the dense structured solver.
struct PhiGramPair {
  CMatrix k1;
  CMatrix k2;

  Index size() const noexcept { return k1.rows(); }
  CMatrix assemble() const;
  /// The same matrix as a Phi-structured block: Phi(K1, conj(K2)).
  PhiBlockMatrix as_phi() const;
};

/// Structured action of Omega on the first block columns [U_X; U_Y].
/// Must return Omega * [X; Y] split into its top (x) and bottom (y) halves.
using OmegaOperator = std::function<PhiBlockMatrix(const PhiBlockMatrix&)>;

/// Bethe-Salpeter Hamiltonian H = C_n Omega with
///
///     Omega = [ A        B       ]     A Hermitian, B complex symmetric.
///             [ conj(B)  conj(A) ]
///
/// Either backed by dense A, B or by an operator hook (sparse or matrix-free
/// use). Immutable after construction; copies share the norm-estimate cache.
class BSHProblem {
 public:
  BSHProblem() = default;

  /// Throws DimensionError for non-square / mismatched blocks and, when
  /// `validate` is set, SymmetryError if ||A - A^H||_max or ||B - B^T||_max
  /// exceed 1e-12 * max(1, ||A||_max). Nothing is symmetrized.
  BSHProblem(CMatrix a, CMatrix b, bool validate = true);

  /// Operator-only problem. `diag_a` / `diag_b` (optional, length n) feed the
  /// diagonal preconditioners.
  static BSHProblem from_operator(Index n, OmegaOperator op,
                                  std::optional<RVector> diag_a = std::nullopt,
                                  std::optional<CVector> diag_b = std::nullopt);

  Index n() const noexcept { return n_; }
  bool has_dense() const noexcept { return dense_; }

  /// Throws Error for operator-only problems.
  const CMatrix& a_block() const;
  const CMatrix& b_block() const;

  std::optional<RVector> diag_a() const;
  std::optional<CVector> diag_b() const;

  /// Dense 2n x 2n Omega (dense problems only).
  CMatrix omega_dense() const;

  PhiBlockMatrix apply(const PhiBlockMatrix& u) const;

  /// Looks up / stores a norm estimate for (t, seed). Fill is idempotent.
  std::optional<double> cached_norm(Index t, std::uint64_t seed) const;
  void store_norm(Index t, std::uint64_t seed, double value) const;

 private:
  struct NormCache;

  Index n_ = 0;
  bool dense_ = false;
  CMatrix a_;
  CMatrix b_;
  OmegaOperator op_;
  std::optional<RVector> op_diag_a_;
  std::optional<CVector> op_diag_b_;
  std::shared_ptr<NormCache> cache_;
};

/// Symmetry tolerance used when validating user input.
double validation_tolerance(const CMatrix& a);

/// Phi(V_X, V_Y) with V_X = A U_X + B U_Y, V_Y = conj(B) U_X + conj(A) U_Y.
PhiBlockMatrix omega_apply(const BSHProblem& p, const PhiBlockMatrix& u);

/// Structured U^H C_n V.
CGramPair c_gram(const PhiBlockMatrix& u, const PhiBlockMatrix& v);

/// Structured U^H Omega V.
PhiGramPair omega_gram(const BSHProblem& p, const PhiBlockMatrix& u, const PhiBlockMatrix& v);

/// Phi(U) Phi(V) = Phi(U_X V_X + conj(U_Y) V_Y, U_Y V_X + conj(U_X) V_Y).
PhiBlockMatrix phi_product(const PhiBlockMatrix& u, const PhiBlockMatrix& v);

/// Phi(U)^H Phi(V) without forming the adjoint explicitly.
PhiBlockMatrix phi_adjoint_product(const PhiBlockMatrix& u, const PhiBlockMatrix& v);

/// ||Omega G||_F / ||G||_F for a seeded complex standard Gaussian G (2n x t).
/// The value is cached on the problem.
double estimate_omega_norm(const BSHProblem& p, Index t, std::uint64_t seed);

/// Real form S = Q_n^H Phi(X, Y) Q_k, with Q_n = [I -iI; I iI]/sqrt(2).
/// This is an algebra isomorphism between Phi matrices and real matrices:
/// products, adjoints (-> transposes) and unitarity (-> orthogonality) carry over.
RMatrix phi_to_real(const PhiBlockMatrix& u);
PhiBlockMatrix real_to_phi(const RMatrix& s);

/// Dense C_k = diag(I_k, -I_k).
CMatrix c_metric(Index k);

}  // namespace bse
