#include "bse/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace bse {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt(v[i]);
  }
  return out;
}

std::vector<double> split_doubles(const std::string& s, int line) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParseError("invalid number '" + tok + "'", line);
    }
  }
  return out;
}

}  // namespace

std::string RunSummary::to_text() const {
  std::ostringstream out;
  out << "command = " << command << '\n';
  out << "provenance = " << provenance << '\n';
  out << "mode = " << mode << '\n';
  out << "precond = " << precond << '\n';
  out << "n = " << n << '\n';
  out << "l = " << l << '\n';
  out << "k = " << k << '\n';
  out << "tol = " << fmt(tol) << '\n';
  out << "max_iter = " << max_iter << '\n';
  out << "seed = " << seed << '\n';
  out << "converged = " << (converged ? "true" : "false") << '\n';
  out << "iterations = " << iterations << '\n';
  out << "switch_iteration = " << (switch_iteration ? std::to_string(*switch_iteration) : "none") << '\n';
  out << "wall_ms = " << fmt(wall_ms) << '\n';
  out << "eigenvalues = " << join(eigenvalues) << '\n';
  out << "residuals = " << join(residuals) << '\n';
  if (j_residual) out << "j_residual = " << fmt(*j_residual) << '\n';
  if (diag_residual) out << "diag_residual = " << fmt(*diag_residual) << '\n';
  if (trace_residual) out << "trace_residual = " << fmt(*trace_residual) << '\n';
  return out.str();
}

RunSummary RunSummary::parse(const std::string& text) {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
    kv[line.substr(0, eq)] = {line.substr(eq + 3), lineno};
  }
  auto get = [&](const std::string& key) -> const std::pair<std::string, int>& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("missing key '" + key + "'", lineno);
    return it->second;
  };
  auto num = [&](const std::string& key) {
    const auto& [v, ln] = get(key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ParseError("invalid number for '" + key + "'", ln);
    }
  };
  auto integer = [&](const std::string& key) {
    const auto& [v, ln] = get(key);
    try {
      return std::stoll(v);
    } catch (const std::exception&) {
      throw ParseError("invalid integer for '" + key + "'", ln);
    }
  };

  RunSummary s;
  s.command = get("command").first;
  s.provenance = get("provenance").first;
  s.mode = get("mode").first;
  s.precond = get("precond").first;
  s.n = integer("n");
  s.l = integer("l");
  s.k = integer("k");
  s.tol = num("tol");
  s.max_iter = static_cast<int>(integer("max_iter"));
  s.seed = std::stoull(get("seed").first);
  s.converged = get("converged").first == "true";
  s.iterations = static_cast<int>(integer("iterations"));
  if (get("switch_iteration").first != "none") s.switch_iteration = static_cast<int>(integer("switch_iteration"));
  s.wall_ms = num("wall_ms");
  s.eigenvalues = split_doubles(get("eigenvalues").first, get("eigenvalues").second);
  s.residuals = split_doubles(get("residuals").first, get("residuals").second);
  if (kv.count("j_residual")) s.j_residual = num("j_residual");
  if (kv.count("diag_residual")) s.diag_residual = num("diag_residual");
  if (kv.count("trace_residual")) s.trace_residual = num("trace_residual");
  return s;
}

std::string history_to_csv(const ConvergenceHistory& history) {
  std::string out = "iter,res_max,mode,reorth,wall_ms\n";
  for (const auto& r : history.records) {
    out += std::to_string(r.iteration) + ',' + fmt(r.res_max) + ',' + to_string(r.metric) + ',' +
           (r.reorth ? "1" : "0") + ',' + fmt(r.wall_ms) + '\n';
  }
  return out;
}

std::vector<HistoryRow> parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 1;
  if (!std::getline(in, line) || line != "iter,res_max,mode,reorth,wall_ms")
    throw ParseError("history header must be iter,res_max,mode,reorth,wall_ms", 1);
  std::vector<HistoryRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream cells(line);
    std::vector<std::string> f;
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParseError("expected 5 columns", lineno);
    HistoryRow row;
    try {
      row.iter = std::stoi(f[0]);
      row.res_max = std::stod(f[1]);
      row.mode = f[2];
      row.reorth = f[3] == "1";
      row.wall_ms = std::stod(f[4]);
    } catch (const std::exception&) {
      throw ParseError("invalid history row", lineno);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace bse
