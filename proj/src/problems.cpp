#include "bse/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bse/symplectic.hpp"

namespace bse {

const BSHProblem& GeneratedProblem::bsh() const {
  if (!is_bsh()) throw Error("GeneratedProblem: not a BSH problem");
  return std::get<BSHProblem>(problem);
}

const RMatrix& GeneratedProblem::spd() const {
  if (is_bsh()) throw Error("GeneratedProblem: not a real spd matrix");
  return std::get<RMatrix>(problem);
}

namespace {

CMatrix gaussian_complex(Index rows, Index cols, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> normal(0.0, sigma);
  CMatrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = {normal(rng), normal(rng)};
  return g;
}

double inf_norm(const CMatrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

// Columns orthonormalized by classical Gram-Schmidt with two passes.
CMatrix cgs2_unitary(CMatrix u) {
  for (Index j = 0; j < u.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      if (j > 0) {
        const CVector coef = u.leftCols(j).adjoint() * u.col(j);
        u.col(j) -= u.leftCols(j) * coef;
      }
    }
    const double nrm = u.col(j).norm();
    if (!(nrm > 0.0)) throw Error("cgs2_unitary: rank deficient sample");
    u.col(j) /= nrm;
  }
  return u;
}

RMatrix j_matrix(Index n) {
  RMatrix j = RMatrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n).setIdentity();
  j.bottomLeftCorner(n, n) = -RMatrix::Identity(n, n);
  return j;
}

}  // namespace

GeneratedProblem gen_random_definite_bsh(Index n, std::uint64_t seed, double diag_shift) {
  if (n < 1) throw DimensionError("gen_random_definite_bsh: n must be positive");
  if (!(diag_shift > 0.0)) throw Error("gen_random_definite_bsh: diag_shift must be positive");
  std::mt19937_64 rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(n));
  const CMatrix g = gaussian_complex(n, n, rng, sigma);
  const CMatrix h = 0.5 * (g + g.adjoint());
  const CMatrix f = gaussian_complex(n, n, rng, sigma);
  CMatrix b = 0.5 * (f + f.transpose());
  CMatrix a = h;
  const double shift = inf_norm(h) + inf_norm(b) + diag_shift;
  for (Index i = 0; i < n; ++i) a(i, i) = a(i, i).real() + shift;

  GeneratedProblem out{BSHProblem(std::move(a), std::move(b)), std::nullopt, ""};
  out.provenance = "random:n=" + std::to_string(n) + ":seed=" + std::to_string(seed) +
                   ":shift=" + std::to_string(diag_shift);
  return out;
}

RMatrix orthosymplectic_from_unitary(const CMatrix& u) {
  const Index n = u.rows();
  RMatrix k(2 * n, 2 * n);
  k.topLeftCorner(n, n) = u.real();
  k.topRightCorner(n, n) = u.imag();
  k.bottomLeftCorner(n, n) = -u.imag();
  k.bottomRightCorner(n, n) = u.real();
  return k;
}

RMatrix symplectic_shear(Index n, Index j, double nu, double c) {
  if (j < 0 || j >= n) throw DimensionError("symplectic_shear: index out of range");
  RMatrix l = RMatrix::Identity(2 * n, 2 * n);
  l(j, j) = nu;
  l(j, n + j) = c;
  l(n + j, n + j) = 1.0 / nu;
  return l;
}

GeneratedProblem gen_known_spectrum_spd(Index n, std::uint64_t seed) {
  if (n < 5) throw DimensionError("gen_known_spectrum_spd: n must be at least 5");
  std::mt19937_64 rng(seed);
  const CMatrix u = cgs2_unitary(gaussian_complex(n, n, rng, 1.0));
  const RMatrix k = orthosymplectic_from_unitary(u);
  const Index j = n / 5;
  const RMatrix l = symplectic_shear(n, j - 1, 1.2, -std::sqrt(static_cast<double>(j)));

  const RMatrix jn = j_matrix(n);
  const double k_sympl = (k.transpose() * jn * k - jn).cwiseAbs().maxCoeff();
  const double k_orth = (k.transpose() * k - RMatrix::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff();
  const double l_sympl = (l.transpose() * jn * l - jn).cwiseAbs().maxCoeff();
  if (k_sympl > 1e-12 || k_orth > 1e-12 || l_sympl > 1e-12)
    throw Error("gen_known_spectrum_spd: generated factor failed the symplecticity check");

  const RMatrix q = k * l;
  RVector d(2 * n);
  for (Index i = 0; i < n; ++i) d(i) = d(n + i) = static_cast<double>(i + 1);
  RMatrix m = q * d.asDiagonal() * q.transpose();
  m = 0.5 * (m + m.transpose()).eval();

  GeneratedProblem out{std::move(m), RVector::LinSpaced(n, 1.0, static_cast<double>(n)), ""};
  out.provenance = "known:n=" + std::to_string(n) + ":seed=" + std::to_string(seed);
  return out;
}

// ---------------------------------------------------------------------------
// Matrix Market

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct LineReader {
  std::istringstream in;
  int line = 0;

  explicit LineReader(const std::string& text) : in(text) {}

  // Next non-blank line; false at end of input.
  bool next(std::string& out) {
    while (std::getline(in, out)) {
      ++line;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      if (out.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }
};

double parse_number(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("invalid number '" + tok + "'", line);
  }
}

Index parse_index(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ParseError("invalid integer '" + tok + "'", line);
  }
}

std::vector<std::string> split(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

int values_per_entry(MarketField f) {
  switch (f) {
    case MarketField::Complex: return 2;
    case MarketField::Pattern: return 0;
    default: return 1;
  }
}

cplx read_value(const std::vector<std::string>& tok, std::size_t at, MarketField f, int line) {
  switch (f) {
    case MarketField::Pattern: return 1.0;
    case MarketField::Complex: return {parse_number(tok[at], line), parse_number(tok[at + 1], line)};
    case MarketField::Integer: return static_cast<double>(parse_index(tok[at], line));
    case MarketField::Real: return parse_number(tok[at], line);
  }
  return 0.0;
}

// Mirror entry (i, j), i >= j, into (j, i) per the symmetry kind.
void place(CMatrix& m, Index i, Index j, cplx v, MarketSymmetry sym, int line) {
  m(i, j) = v;
  if (i == j) {
    if (sym == MarketSymmetry::Hermitian && v.imag() != 0.0)
      throw ParseError("hermitian diagonal entry has nonzero imaginary part", line);
    if (sym == MarketSymmetry::SkewSymmetric && v != cplx(0.0))
      throw ParseError("skew-symmetric file stores a diagonal entry", line);
    return;
  }
  switch (sym) {
    case MarketSymmetry::General: break;
    case MarketSymmetry::Symmetric: m(j, i) = v; break;
    case MarketSymmetry::Hermitian: m(j, i) = std::conj(v); break;
    case MarketSymmetry::SkewSymmetric: m(j, i) = -v; break;
  }
}

}  // namespace

MarketMatrix parse_matrix_market(const std::string& text) {
  LineReader rd(text);
  std::string line;
  if (!std::getline(rd.in, line)) throw ParseError("empty file", 1);
  rd.line = 1;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto head = split(line);
  if (head.size() != 5 || lower(head[0]) != "%%matrixmarket" || lower(head[1]) != "matrix")
    throw ParseError("missing or malformed %%MatrixMarket header", 1);

  MarketMatrix out;
  const std::string fmt = lower(head[2]);
  const std::string field = lower(head[3]);
  const std::string sym = lower(head[4]);
  if (fmt == "array") out.format = MarketFormat::Array;
  else if (fmt == "coordinate") out.format = MarketFormat::Coordinate;
  else throw ParseError("unknown format '" + head[2] + "'", 1);
  if (field == "real" || field == "double") out.field = MarketField::Real;
  else if (field == "complex") out.field = MarketField::Complex;
  else if (field == "integer") out.field = MarketField::Integer;
  else if (field == "pattern") out.field = MarketField::Pattern;
  else throw ParseError("unknown field '" + head[3] + "'", 1);
  if (sym == "general") out.symmetry = MarketSymmetry::General;
  else if (sym == "symmetric") out.symmetry = MarketSymmetry::Symmetric;
  else if (sym == "hermitian") out.symmetry = MarketSymmetry::Hermitian;
  else if (sym == "skew-symmetric") out.symmetry = MarketSymmetry::SkewSymmetric;
  else throw ParseError("unknown symmetry '" + head[4] + "'", 1);
  if (out.field == MarketField::Pattern && out.format == MarketFormat::Array)
    throw ParseError("pattern field is only valid for coordinate format", 1);
  if (out.symmetry == MarketSymmetry::Hermitian && out.field != MarketField::Complex)
    out.symmetry = MarketSymmetry::Symmetric;

  // Comments, then the size line.
  std::vector<std::string> size_tok;
  while (rd.next(line)) {
    if (line[0] == '%') {
      out.comments.push_back(line.substr(1));
      continue;
    }
    size_tok = split(line);
    break;
  }
  if (size_tok.empty()) throw ParseError("missing size line", rd.line + 1);
  const int size_line = rd.line;
  const std::size_t want_size = out.format == MarketFormat::Array ? 2 : 3;
  if (size_tok.size() != want_size) throw ParseError("malformed size line", size_line);
  const Index rows = parse_index(size_tok[0], size_line);
  const Index cols = parse_index(size_tok[1], size_line);
  if (rows < 0 || cols < 0) throw ParseError("negative dimension", size_line);
  if (out.symmetry != MarketSymmetry::General && rows != cols)
    throw ParseError("symmetric storage requires a square matrix", size_line);
  out.values = CMatrix::Zero(rows, cols);

  const int per = values_per_entry(out.field);
  if (out.format == MarketFormat::Array) {
    // Column-major; the symmetric kinds store the lower triangle only.
    for (Index j = 0; j < cols; ++j) {
      const Index first = out.symmetry == MarketSymmetry::General ? 0
                          : out.symmetry == MarketSymmetry::SkewSymmetric ? j + 1 : j;
      for (Index i = first; i < rows; ++i) {
        if (!rd.next(line))
          throw ParseError("unexpected end of file: expected entry (" + std::to_string(i + 1) + ", " +
                               std::to_string(j + 1) + ")", rd.line + 1);
        const auto tok = split(line);
        if (static_cast<int>(tok.size()) != per) throw ParseError("wrong number of values in entry", rd.line);
        place(out.values, i, j, read_value(tok, 0, out.field, rd.line), out.symmetry, rd.line);
      }
    }
  } else {
    const Index nnz = parse_index(size_tok[2], size_line);
    if (nnz < 0) throw ParseError("negative entry count", size_line);
    for (Index e = 0; e < nnz; ++e) {
      if (!rd.next(line))
        throw ParseError("unexpected end of file: read " + std::to_string(e) + " of " + std::to_string(nnz) +
                             " entries", rd.line + 1);
      const auto tok = split(line);
      if (static_cast<int>(tok.size()) != 2 + per) throw ParseError("wrong number of fields in entry", rd.line);
      const Index i = parse_index(tok[0], rd.line) - 1;
      const Index j = parse_index(tok[1], rd.line) - 1;
      if (i < 0 || i >= rows || j < 0 || j >= cols) throw ParseError("entry index out of range", rd.line);
      if (out.symmetry != MarketSymmetry::General && i < j)
        throw ParseError("entry above the diagonal in a file marked " + head[4], rd.line);
      place(out.values, i, j, read_value(tok, 2, out.field, rd.line), out.symmetry, rd.line);
    }
  }
  if (rd.next(line) && line[0] != '%') throw ParseError("trailing data after the last entry", rd.line);
  return out;
}

MarketMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_matrix_market(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

namespace {

void append_value(std::string& out, cplx v, MarketField f) {
  char buf[80];
  switch (f) {
    case MarketField::Complex:
      std::snprintf(buf, sizeof buf, "%.17g %.17g", v.real(), v.imag());
      break;
    case MarketField::Integer:
      std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(std::llround(v.real())));
      break;
    case MarketField::Pattern:
      buf[0] = '\0';
      break;
    case MarketField::Real:
      std::snprintf(buf, sizeof buf, "%.17g", v.real());
      break;
  }
  out += buf;
}

const char* name(MarketField f) {
  switch (f) {
    case MarketField::Complex: return "complex";
    case MarketField::Integer: return "integer";
    case MarketField::Pattern: return "pattern";
    case MarketField::Real: return "real";
  }
  return "real";
}

const char* name(MarketSymmetry s) {
  switch (s) {
    case MarketSymmetry::Symmetric: return "symmetric";
    case MarketSymmetry::Hermitian: return "hermitian";
    case MarketSymmetry::SkewSymmetric: return "skew-symmetric";
    case MarketSymmetry::General: return "general";
  }
  return "general";
}

}  // namespace

std::string format_matrix_market(const MarketMatrix& m) {
  const CMatrix& a = m.values;
  if (m.symmetry != MarketSymmetry::General && a.rows() != a.cols())
    throw DimensionError("format_matrix_market: symmetric storage requires a square matrix");
  if (m.field == MarketField::Pattern && m.format == MarketFormat::Array)
    throw Error("format_matrix_market: pattern field needs coordinate format");

  std::string out = "%%MatrixMarket matrix ";
  out += m.format == MarketFormat::Array ? "array " : "coordinate ";
  out += name(m.field);
  out += ' ';
  out += name(m.symmetry);
  out += '\n';
  for (const auto& c : m.comments) out += "%" + c + "\n";

  auto in_storage = [&](Index i, Index j) {
    switch (m.symmetry) {
      case MarketSymmetry::General: return true;
      case MarketSymmetry::SkewSymmetric: return i > j;
      default: return i >= j;
    }
  };
  if (m.format == MarketFormat::Array) {
    out += std::to_string(a.rows()) + " " + std::to_string(a.cols()) + "\n";
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = 0; i < a.rows(); ++i) {
        if (!in_storage(i, j)) continue;
        append_value(out, a(i, j), m.field);
        out += '\n';
      }
    return out;
  }
  std::string body;
  Index nnz = 0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) {
      if (!in_storage(i, j) || a(i, j) == cplx(0.0)) continue;
      body += std::to_string(i + 1) + " " + std::to_string(j + 1);
      if (m.field != MarketField::Pattern) {
        body += ' ';
        append_value(body, a(i, j), m.field);
      }
      body += '\n';
      ++nnz;
    }
  out += std::to_string(a.rows()) + " " + std::to_string(a.cols()) + " " + std::to_string(nnz) + "\n";
  return out + body;
}

void write_matrix_market(const std::string& path, const MarketMatrix& m) {
  const std::string text = format_matrix_market(m);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

GeneratedProblem load_matrix_market(const std::string& path_a, const std::optional<std::string>& path_b,
                                    ProblemKind kind) {
  const MarketMatrix a = read_matrix_market(path_a);
  if (a.values.rows() != a.values.cols()) throw DimensionError(path_a + ": matrix is not square");

  if (kind == ProblemKind::Spd) {
    if (path_b) throw Error("load_matrix_market: spd problems take a single file");
    if (a.field == MarketField::Complex) throw Error(path_a + ": spd matrix must be real");
    if (a.symmetry == MarketSymmetry::Hermitian || a.symmetry == MarketSymmetry::SkewSymmetric)
      throw Error(path_a + ": symmetry marker does not match a real symmetric matrix");
    if (a.values.rows() % 2 != 0) throw DimensionError(path_a + ": spd matrix has odd dimension");
    RMatrix m = a.values.real();
    GeneratedProblem out{m, std::nullopt, "file:" + path_a};
    spd_to_bsh(m);  // symmetry check
    return out;
  }

  if (!path_b) throw Error("load_matrix_market: bsh problems need files for A and B");
  const MarketMatrix b = read_matrix_market(*path_b);
  if (a.field == MarketField::Complex && a.symmetry == MarketSymmetry::Symmetric)
    throw Error(path_a + ": A is marked complex symmetric, expected hermitian");
  if (a.symmetry == MarketSymmetry::SkewSymmetric) throw Error(path_a + ": A is marked skew-symmetric");
  if (b.symmetry == MarketSymmetry::Hermitian || b.symmetry == MarketSymmetry::SkewSymmetric)
    throw Error(*path_b + ": B must be complex symmetric");
  GeneratedProblem out{BSHProblem(a.values, b.values), std::nullopt, "file:" + path_a + "," + *path_b};
  return out;
}

Preconditioner build_preconditioner(const BSHProblem& p, PreconditionerKind kind) {
  if (kind == PreconditionerKind::Identity) return Preconditioner::identity();
  const auto da = p.diag_a();
  if (!da) throw Error("build_preconditioner: problem provides no diagonal of A");
  const double scale = p.has_dense() ? p.a_block().cwiseAbs().maxCoeff() : da->cwiseAbs().maxCoeff();
  if (kind == PreconditionerKind::DiagA) return Preconditioner::diag_a(*da, scale);
  const CVector db = p.diag_b().value_or(CVector::Zero(p.n()));
  return Preconditioner::block_diag_ab(*da, db, scale);
}

}  // namespace bse
