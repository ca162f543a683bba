#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "varinf/fclt.hpp"
#include "varinf/verify.hpp"

namespace varinf {

// CSV / JSON writers.  All numeric output is shortest-round-trip decimal
// with LF line endings and a header row.

namespace io {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
}

inline std::string trajectory_csv(const SimulationTrajectory& tr) {
  std::string s = "t,S,E,I,R,FoI,Upsilon\n";
  for (std::size_t k = 0; k < tr.grid.nodes; ++k) {
    s += format_double(tr.grid.time(k));
    s += ',' + std::to_string(tr.S[k]);
    s += ',' + std::to_string(tr.E[k]);
    s += ',' + std::to_string(tr.I[k]);
    s += ',' + std::to_string(tr.R[k]);
    s += ',' + format_double(tr.foi[k]);
    s += ',' + format_double(tr.upsilon[k]);
    s += '\n';
  }
  return s;
}

inline std::string events_csv(const SimulationTrajectory& tr) {
  std::string s = "tau,zeta,eta\n";
  for (const auto& ev : tr.events) {
    s += format_double(ev.time);
    s += ',' + format_double(ev.zeta);
    s += ',' + format_double(ev.eta);
    s += '\n';
  }
  return s;
}

inline std::string flln_csv(const FllnSolution& sol) {
  std::string s = "t,S,FoI,E,I,R,Upsilon\n";
  for (std::size_t k = 0; k < sol.grid.nodes; ++k) {
    s += format_double(sol.grid.time(k));
    s += ',' + format_double(sol.S[k]);
    s += ',' + format_double(sol.FoI[k]);
    s += ',' + format_double(sol.E[k]);
    s += ',' + format_double(sol.I[k]);
    s += ',' + format_double(sol.R[k]);
    s += ',' + format_double(sol.Upsilon[k]);
    s += '\n';
  }
  return s;
}

inline std::string sojourn_csv(const SojournTable& t) {
  std::string s = "t,G,Phi,Psi,G0,Phi0,Psi0,F0I\n";
  for (std::size_t k = 0; k < t.grid.nodes; ++k) {
    s += format_double(t.grid.time(k));
    s += ',' + format_double(t.G[k]);
    s += ',' + format_double(t.Phi[k]);
    s += ',' + format_double(t.Psi[k]);
    s += ',' + format_double(t.G0[k]);
    s += ',' + format_double(t.Phi0[k]);
    s += ',' + format_double(t.Psi0[k]);
    s += ',' + format_double(t.F0I[k]);
    s += '\n';
  }
  return s;
}

// One covariance block, row-major with the grid as header row/column.
inline std::string kernel_block_csv(const CovKernelSet& ks, std::size_t a, std::size_t b) {
  const std::size_t n = ks.grid.nodes;
  std::string s = "t";
  for (std::size_t j = 0; j < n; ++j) s += ',' + format_double(ks.grid.time(j));
  s += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    s += format_double(ks.grid.time(i));
    for (std::size_t j = 0; j < n; ++j) s += ',' + format_double(ks.cov(a, i, b, j));
    s += '\n';
  }
  return s;
}

inline std::string ensemble_csv(const Grid& grid, const std::vector<std::vector<double>>& paths) {
  std::string s = "t";
  for (std::size_t p = 0; p < paths.size(); ++p) s += ",path_" + std::to_string(p);
  s += '\n';
  for (std::size_t k = 0; k < grid.nodes; ++k) {
    s += format_double(grid.time(k));
    for (const auto& path : paths) s += ',' + format_double(path[k]);
    s += '\n';
  }
  return s;
}

inline void write_report(const std::filesystem::path& dir, const McReport& report) {
  write_file(dir / (report.experiment + "_report.json"), report.to_json().dump(2) + "\n");
  write_file(dir / (report.experiment + "_report.txt"), report.to_text());
}

}  // namespace io
}  // namespace varinf
