#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bse/lobpcg.hpp"

namespace bse {

/// Key-value record of one solver run. `to_text` writes keys in a fixed
/// order with 17 significant digits, so `parse(to_text())` is lossless.
struct RunSummary {
  std::string command;
  std::string provenance;
  std::string mode;
  std::string precond;
  Index n = 0;
  Index l = 0;
  Index k = 0;
  double tol = 0.0;
  int max_iter = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  int iterations = 0;
  std::optional<int> switch_iteration;
  double wall_ms = 0.0;
  std::vector<double> eigenvalues;
  std::vector<double> residuals;
  std::optional<double> j_residual;
  std::optional<double> diag_residual;
  std::optional<double> trace_residual;

  std::string to_text() const;
  static RunSummary parse(const std::string& text);
  bool operator==(const RunSummary&) const = default;
};

struct HistoryRow {
  int iter = 0;
  double res_max = 0.0;
  std::string mode;
  bool reorth = false;
  double wall_ms = 0.0;
};

/// CSV with header iter,res_max,mode,reorth,wall_ms.
std::string history_to_csv(const ConvergenceHistory& history);
std::vector<HistoryRow> parse_history_csv(const std::string& text);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::string& path, const std::string& text);
std::string read_file(const std::string& path);

}  // namespace bse
