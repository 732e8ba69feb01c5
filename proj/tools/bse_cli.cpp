// Batch front-end: solve-bse, solve-symplectic and bench.
//
// Exit codes: 0 converged, 2 ran but did not converge, 1 usage or runtime error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bse/problems.hpp"
#include "bse/report.hpp"
#include "bse/symplectic.hpp"

namespace fs = std::filesystem;
using namespace bse;

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverFlags {
  Index l = 0;
  Index k = 0;  // 0: use the default rule
  double tol = 1e-12;
  int max_iter = 200;
  std::string mode = "adaptive";
  std::string precond = "diag-a";
  std::uint64_t seed = 0;
  std::string out;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, bool need_l, bool with_mode = true) {
  auto* l = cmd->add_option("--l", f.l, "number of wanted eigenpairs")->check(CLI::PositiveNumber);
  if (need_l) l->required();
  cmd->add_option("--k", f.k, "block size (default max(ceil(3l/2), l+5))")->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "convergence tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-iter", f.max_iter, "iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
  if (with_mode)
    cmd->add_option("--mode", f.mode, "c|cihl|omega-ihl|adaptive")
        ->check(CLI::IsMember({"c", "cihl", "omega-ihl", "adaptive"}))
        ->capture_default_str();
  cmd->add_option("--precond", f.precond, "identity|diag-a|block-diag-ab")
      ->check(CLI::IsMember({"identity", "diag-a", "block-diag-ab"}))
      ->capture_default_str();
  cmd->add_option("--seed", f.seed, "seed of the initial block")->capture_default_str();
  cmd->add_option("--out", f.out, "output directory (default $BSE_OUT_DIR or ./bse_out)");
}

SolverConfig make_config(const SolverFlags& f, Index l, SolverMode mode) {
  SolverConfig cfg;
  cfg.l = l;
  if (f.k > 0) cfg.k = f.k;
  cfg.tol = f.tol;
  cfg.max_iter = f.max_iter;
  cfg.seed = f.seed;
  cfg.mode = mode;
  cfg.validate();
  return cfg;
}

std::string output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BSE_OUT_DIR"); env && *env) return env;
  return "bse_out";
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, sep)) out.push_back(tok);
  return out;
}

// "<name>:<n>:<seed>"
std::pair<Index, std::uint64_t> parse_gen(const std::string& spec, const std::string& name) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3 || parts[0] != name)
    throw UsageError("--gen expects " + name + ":<n>:<seed>, got '" + spec + "'");
  try {
    std::size_t used = 0;
    const long long n = std::stoll(parts[1], &used);
    if (used != parts[1].size() || n < 1) throw UsageError("--gen: bad size '" + parts[1] + "'");
    const unsigned long long seed = std::stoull(parts[2], &used);
    if (used != parts[2].size()) throw UsageError("--gen: bad seed '" + parts[2] + "'");
    return {static_cast<Index>(n), seed};
  } catch (const std::logic_error&) {
    throw UsageError("--gen: malformed '" + spec + "'");
  }
}

std::vector<long long> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<long long> out;
  for (const auto& tok : split(text, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(tok, &used));
      if (used != tok.size() || out.back() < 0) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw UsageError(flag + ": bad entry '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " must not be empty");
  return out;
}

RunSummary base_summary(const std::string& command, const std::string& provenance, const SolverConfig& cfg,
                        const std::string& precond, Index n, const Solution& sol, double wall_ms) {
  RunSummary s;
  s.command = command;
  s.provenance = provenance;
  s.mode = to_string(cfg.mode);
  s.precond = precond;
  s.n = n;
  s.l = cfg.l;
  s.k = cfg.block_size();
  s.tol = cfg.tol;
  s.max_iter = cfg.max_iter;
  s.seed = cfg.seed;
  s.converged = sol.converged;
  s.iterations = sol.iterations;
  s.switch_iteration = sol.history.switch_iteration;
  s.wall_ms = wall_ms;
  s.eigenvalues.assign(sol.lambda.data(), sol.lambda.data() + sol.lambda.size());
  s.residuals.assign(sol.residuals.data(), sol.residuals.data() + sol.residuals.size());
  return s;
}

void write_outputs(const std::string& dir, const RunSummary& s, const ConvergenceHistory& h) {
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "summary.txt").string(), s.to_text());
  write_file_atomic((fs::path(dir) / "history.csv").string(), history_to_csv(h));
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct CaseResult {
  RunSummary summary;
  ConvergenceHistory history;
};

CaseResult run_bse(const GeneratedProblem& g, const SolverFlags& f, Index l, SolverMode mode) {
  const BSHProblem& p = g.bsh();
  const SolverConfig cfg = make_config(f, l, mode);
  const auto t0 = std::chrono::steady_clock::now();
  const Solution sol = lobpcg_solve(p, build_preconditioner(p, parse_preconditioner_kind(f.precond)), cfg);
  return {base_summary("solve-bse", g.provenance, cfg, f.precond, p.n(), sol, elapsed_ms(t0)), sol.history};
}

// Dense Cholesky check for matrices small enough to factor.
void require_spd(const RMatrix& m) {
  if (m.rows() > 2 * kDefaultDenseCap) return;
  Eigen::LLT<RMatrix> llt(m);
  if (llt.info() != Eigen::Success) throw Error("matrix is not positive definite");
}

CaseResult run_symplectic(const GeneratedProblem& g, const SolverFlags& f, Index l, SolverMode mode) {
  const RMatrix& m = g.spd();
  require_spd(m);
  const SolverConfig cfg = make_config(f, l, mode);
  const auto t0 = std::chrono::steady_clock::now();
  const SymplecticResult r = symplectic_eigensolve(m, l, cfg, parse_preconditioner_kind(f.precond));
  RunSummary s = base_summary("solve-symplectic", g.provenance, cfg, f.precond, m.rows() / 2, r.solution,
                              elapsed_ms(t0));
  s.eigenvalues.assign(r.lambda.data(), r.lambda.data() + r.lambda.size());
  s.j_residual = r.j_residual;
  s.diag_residual = r.diag_residual;
  s.trace_residual = r.trace_residual;
  return {std::move(s), r.solution.history};
}

int finish(const CaseResult& c, const std::string& dir) {
  write_outputs(dir, c.summary, c.history);
  std::cout << c.summary.to_text();
  return c.summary.converged ? kExitConverged : kExitNotConverged;
}

struct BenchFlags {
  std::string suite;
  std::string sizes;
  std::string seeds = "0";
  std::string modes = "adaptive";
};

int run_bench(const BenchFlags& b, const SolverFlags& f) {
  if (b.suite != "bse" && b.suite != "symplectic") throw UsageError("--suite must be bse or symplectic");
  const auto sizes = parse_int_list(b.sizes, "--sizes");
  const auto seeds = parse_int_list(b.seeds, "--seeds");
  std::vector<SolverMode> modes;
  for (const auto& m : split(b.modes, ','))
    if (!m.empty()) modes.push_back(parse_solver_mode(m));
  if (modes.empty()) throw UsageError("--modes must not be empty");
  const Index l = f.l > 0 ? f.l : (b.suite == "bse" ? 4 : 10);
  const std::string dir = output_dir(f.out);

  std::ostringstream table;
  table << "suite,n,seed,mode,iterations,wall_ms,res_max,switch,converged\n";
  bool all = true;
  bool failed = false;
  std::printf("%-10s %6s %6s %-10s %6s %12s %12s %7s %s\n", "suite", "n", "seed", "mode", "iter", "wall_ms",
              "res_max", "switch", "status");
  for (const long long n : sizes) {
    for (const long long seed : seeds) {
      const GeneratedProblem g = b.suite == "bse" ? gen_random_definite_bsh(n, seed)
                                                  : gen_known_spectrum_spd(n, seed);
      for (const SolverMode mode : modes) {
        const std::string name = b.suite + "_n" + std::to_string(n) + "_s" + std::to_string(seed) + "_" +
                                 to_string(mode);
        CaseResult c;
        try {
          c = b.suite == "bse" ? run_bse(g, f, l, mode) : run_symplectic(g, f, l, mode);
        } catch (const std::exception& e) {
          failed = true;
          std::printf("%-10s %6lld %6lld %-10s ERROR: %s\n", b.suite.c_str(), n, seed, to_string(mode).c_str(),
                      e.what());
          table << b.suite << ',' << n << ',' << seed << ',' << to_string(mode) << ",,,,,error\n";
          continue;
        }
        write_outputs((fs::path(dir) / name).string(), c.summary, c.history);
        double res_max = 0.0;
        for (double r : c.summary.residuals) res_max = std::max(res_max, r);
        const std::string sw = c.summary.switch_iteration ? std::to_string(*c.summary.switch_iteration) : "-";
        all = all && c.summary.converged;
        std::printf("%-10s %6lld %6lld %-10s %6d %12.1f %12.3e %7s %s\n", b.suite.c_str(), n, seed,
                    to_string(mode).c_str(), c.summary.iterations, c.summary.wall_ms, res_max, sw.c_str(),
                    c.summary.converged ? "ok" : "NOT CONVERGED");
        char row[256];
        std::snprintf(row, sizeof row, "%s,%lld,%lld,%s,%d,%.3f,%.17g,%s,%s\n", b.suite.c_str(), n, seed,
                      to_string(mode).c_str(), c.summary.iterations, c.summary.wall_ms, res_max, sw.c_str(),
                      c.summary.converged ? "true" : "false");
        table << row;
      }
    }
  }
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / "bench.csv").string(), table.str());
  if (failed) return kExitError;
  return all ? kExitConverged : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured LOBPCG eigensolver for BSE and symplectic eigenvalue problems"};
  app.require_subcommand(1);

  SolverFlags bse_flags;
  std::string path_a, path_b, gen_bse;
  auto* bse_cmd = app.add_subcommand("solve-bse", "l smallest positive eigenpairs of a definite BSH matrix");
  auto* opt_a = bse_cmd->add_option("--a", path_a, "Matrix Market file of A (Hermitian)");
  auto* opt_b = bse_cmd->add_option("--b", path_b, "Matrix Market file of B (complex symmetric)");
  auto* opt_gen_bse = bse_cmd->add_option("--gen", gen_bse, "random:<n>:<seed>");
  opt_a->needs(opt_b);
  opt_b->needs(opt_a);
  opt_gen_bse->excludes(opt_a)->excludes(opt_b);
  add_solver_flags(bse_cmd, bse_flags, true);

  SolverFlags sym_flags;
  std::string path_m, gen_sym;
  auto* sym_cmd = app.add_subcommand("solve-symplectic", "l smallest symplectic eigenvalues of an spd matrix");
  auto* opt_m = sym_cmd->add_option("--m", path_m, "Matrix Market file of M (real symmetric, even size)");
  sym_cmd->add_option("--gen", gen_sym, "known:<n>:<seed>")->excludes(opt_m);
  add_solver_flags(sym_cmd, sym_flags, true);

  SolverFlags bench_flags;
  BenchFlags bench;
  auto* bench_cmd = app.add_subcommand("bench", "compare solver modes over generated problems");
  bench_cmd->add_option("--suite", bench.suite, "bse|symplectic")->required();
  bench_cmd->add_option("--sizes", bench.sizes, "comma-separated problem sizes")->required();
  bench_cmd->add_option("--seeds", bench.seeds, "comma-separated generator seeds")->capture_default_str();
  bench_cmd->add_option("--modes", bench.modes, "comma-separated modes")->capture_default_str();
  add_solver_flags(bench_cmd, bench_flags, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitError;
  }

  try {
    if (*bse_cmd) {
      GeneratedProblem g;
      if (!gen_bse.empty()) {
        const auto [n, seed] = parse_gen(gen_bse, "random");
        g = gen_random_definite_bsh(n, seed);
      } else if (!path_a.empty()) {
        g = load_matrix_market(path_a, path_b, ProblemKind::Bsh);
      } else {
        throw UsageError("solve-bse needs --a/--b or --gen");
      }
      return finish(run_bse(g, bse_flags, bse_flags.l, parse_solver_mode(bse_flags.mode)), output_dir(bse_flags.out));
    }
    if (*sym_cmd) {
      GeneratedProblem g;
      if (!gen_sym.empty()) {
        const auto [n, seed] = parse_gen(gen_sym, "known");
        g = gen_known_spectrum_spd(n, seed);
      } else if (!path_m.empty()) {
        g = load_matrix_market(path_m, std::nullopt, ProblemKind::Spd);
      } else {
        throw UsageError("solve-symplectic needs --m or --gen");
      }
      return finish(run_symplectic(g, sym_flags, sym_flags.l, parse_solver_mode(sym_flags.mode)),
                    output_dir(sym_flags.out));
    }
    return run_bench(bench, bench_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}
