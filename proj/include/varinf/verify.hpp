#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <json.hpp>

#include "varinf/fclt.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// Monte Carlo verification harness: quantitative FLLN / FCLT checks against
// the simulator, and the compensated-PRM mixed-moment identity.  Every
// reported statistic carries its standard error; the pass flag is a pure
// function of the statistics and the tolerances recorded in the report.
// ---------------------------------------------------------------------------

struct McReport {
  std::string experiment;
  bool pass = false;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  nlohmann::json stats;

  nlohmann::json to_json() const {
    return {{"experiment", experiment},
            {"pass", pass},
            {"seed", seed},
            {"wall_seconds", wall_seconds},
            {"stats", stats}};
  }

  std::string to_text() const {
    std::string s;
    s += "experiment: " + experiment + "\n";
    s += "seed:       " + std::to_string(seed) + "\n";
    s += "wall:       " + format_double(wall_seconds) + " s\n";
    s += "result:     " + std::string(pass ? "PASS" : "FAIL") + "\n";
    s += stats.dump(2) + "\n";
    return s;
  }
};

namespace detail {

class StopWatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

inline std::uint64_t rep_seed(std::uint64_t seed, std::uint64_t group, std::uint64_t rep) {
  return derive_seed(derive_seed(seed, group), rep);
}

}  // namespace detail

// Entrywise z = (A - B) / sqrt(seA^2 + seB^2); returns max |z| and table.
struct ZTable {
  std::size_t dim = 0;
  std::vector<double> z;
  double max_abs = 0.0;
};

inline ZTable compare_covariances(const CovEstimate& A, const CovEstimate& B) {
  if (A.dim != B.dim) throw std::invalid_argument("compare_covariances: shape mismatch");
  ZTable t;
  t.dim = A.dim;
  t.z.assign(A.dim * A.dim, 0.0);
  for (std::size_t k = 0; k < A.dim * A.dim; ++k) {
    double denom = std::sqrt(A.se[k] * A.se[k] + B.se[k] * B.se[k]);
    double diff = A.value[k] - B.value[k];
    t.z[k] = denom > 0.0 ? diff / denom : (diff == 0.0 ? 0.0 : std::copysign(1e308, diff));
    t.max_abs = std::max(t.max_abs, std::abs(t.z[k]));
  }
  return t;
}

inline std::vector<ProcessTag> tracked_processes(Variant v) {
  switch (v) {
    case Variant::SEIR:
      return {ProcessTag::S, ProcessTag::FoI, ProcessTag::E, ProcessTag::I, ProcessTag::R};
    case Variant::SIR: return {ProcessTag::S, ProcessTag::FoI, ProcessTag::I, ProcessTag::R};
    case Variant::SIS: return {ProcessTag::FoI, ProcessTag::I};
    case Variant::SIRS: return {ProcessTag::FoI, ProcessTag::I, ProcessTag::R};
  }
  return {};
}

namespace detail {

inline double traj_value(const SimulationTrajectory& tr, ProcessTag p, std::size_t node,
                         double invN) {
  switch (p) {
    case ProcessTag::S: return static_cast<double>(tr.S[node]) * invN;
    case ProcessTag::FoI: return tr.foi[node] * invN;
    case ProcessTag::E: return static_cast<double>(tr.E[node]) * invN;
    case ProcessTag::I: return static_cast<double>(tr.I[node]) * invN;
    case ProcessTag::R: return static_cast<double>(tr.R[node]) * invN;
  }
  return 0.0;
}

inline double limit_value(const FllnSolution& f, ProcessTag p, std::size_t node) {
  switch (p) {
    case ProcessTag::S: return f.S[node];
    case ProcessTag::FoI: return f.FoI[node];
    case ProcessTag::E: return f.E[node];
    case ProcessTag::I: return f.I[node];
    case ProcessTag::R: return f.R[node];
  }
  return 0.0;
}

}  // namespace detail

// Mean (over replications) sup-grid error of every tracked process per
// population size; passes when errors fall monotonically in N and each
// consecutive decay ratio is consistent with the sqrt(N) rate.
inline McReport run_lln_experiment(const Scenario& base, const std::vector<std::int64_t>& Ns,
                                   int reps, std::uint64_t seed) {
  if (Ns.size() < 2 || !std::is_sorted(Ns.begin(), Ns.end()))
    throw std::invalid_argument("run_lln_experiment: Ns must be increasing");
  if (reps < 10) throw std::invalid_argument("run_lln_experiment: reps must be >= 10");
  detail::StopWatch watch;
  McReport rep;
  rep.experiment = "lln";
  rep.seed = seed;

  const Grid grid = base.output_grid();
  FllnSolution limit = solve_flln_nested(base, grid);
  auto procs = tracked_processes(base.variant);

  nlohmann::json per_n = nlohmann::json::array();
  // err_stats[n_idx][proc] = RunningStats over reps
  std::vector<std::vector<RunningStats>> err(Ns.size(), std::vector<RunningStats>(procs.size()));
  for (std::size_t ni = 0; ni < Ns.size(); ++ni) {
    Scenario sc = base;
    sc.population = Ns[ni];
    std::vector<std::vector<double>> sup(reps, std::vector<double>(procs.size(), 0.0));
    parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
      auto tr = simulate_epidemic(sc, detail::rep_seed(seed, ni, r));
      double invN = 1.0 / static_cast<double>(sc.population);
      for (std::size_t pi = 0; pi < procs.size(); ++pi) {
        double worst = 0.0;
        for (std::size_t k = 0; k < grid.nodes; ++k)
          worst = std::max(worst, std::abs(detail::traj_value(tr, procs[pi], k, invN) -
                                           detail::limit_value(limit, procs[pi], k)));
        sup[r][pi] = worst;
      }
    });
    for (int r = 0; r < reps; ++r)
      for (std::size_t pi = 0; pi < procs.size(); ++pi) err[ni][pi].add(sup[r][pi]);
    nlohmann::json row;
    row["N"] = Ns[ni];
    for (std::size_t pi = 0; pi < procs.size(); ++pi) {
      row[process_name(procs[pi])] = {{"mean_sup_error", err[ni][pi].mean},
                                      {"se", err[ni][pi].se_of_mean()}};
    }
    per_n.push_back(row);
  }

  bool pass = true;
  nlohmann::json ratios = nlohmann::json::array();
  for (std::size_t pi = 0; pi < procs.size(); ++pi) {
    double biggest = 0.0;
    for (std::size_t ni = 0; ni < Ns.size(); ++ni) biggest = std::max(biggest, err[ni][pi].mean);
    if (biggest <= 1e-12) continue;  // identically-zero process
    for (std::size_t ni = 0; ni + 1 < Ns.size(); ++ni) {
      double e_lo = err[ni][pi].mean, e_hi = err[ni + 1][pi].mean;
      double s = static_cast<double>(Ns[ni + 1]) / static_cast<double>(Ns[ni]);
      double ratio = e_hi > 0.0 ? e_lo / e_hi : std::numeric_limits<double>::infinity();
      // delta-method SE of the ratio of the two mean errors
      double rel_lo = e_lo > 0.0 ? err[ni][pi].se_of_mean() / e_lo : 0.0;
      double rel_hi = e_hi > 0.0 ? err[ni + 1][pi].se_of_mean() / e_hi : 0.0;
      double ratio_se = std::isfinite(ratio)
                            ? ratio * std::sqrt(rel_lo * rel_lo + rel_hi * rel_hi)
                            : 0.0;
      double lo = 0.7 * std::sqrt(s), hi = 1.4 * std::sqrt(s);
      bool ok = e_hi < e_lo && ratio >= lo && ratio <= hi;
      pass = pass && ok;
      ratios.push_back({{"process", process_name(procs[pi])},
                        {"from_N", Ns[ni]},
                        {"to_N", Ns[ni + 1]},
                        {"ratio", ratio},
                        {"ratio_se", ratio_se},
                        {"band", {lo, hi}},
                        {"ok", ok}});
    }
  }
  rep.stats = {{"per_N", per_n}, {"ratios", ratios}, {"reps", reps}};
  rep.pass = pass;
  rep.wall_seconds = watch.seconds();
  return rep;
}

// Empirical sqrt(N)-fluctuation covariance of the simulator versus the
// sampled FCLT limit, at the given times.
inline McReport run_clt_experiment(const Scenario& base, std::int64_t N, int reps,
                                   const std::vector<double>& times, std::uint64_t seed,
                                   double kernel_step = 0.05) {
  if (N < 5000) throw std::invalid_argument("run_clt_experiment: N must be >= 5000");
  if (reps < 1000) throw std::invalid_argument("run_clt_experiment: reps must be >= 1000");
  for (double t : times)
    if (t < 1.0 || t > base.horizon)
      throw std::invalid_argument("run_clt_experiment: times must lie in [1, T]");
  detail::StopWatch watch;
  McReport rep;
  rep.experiment = "clt";
  rep.seed = seed;

  Scenario sc = base;
  sc.population = N;
  const Grid grid = sc.output_grid();
  FllnSolution limit_fine = solve_flln_nested(sc, grid, 0.0025);
  auto procs = tracked_processes(sc.variant);
  std::vector<ProcessTime> sel;
  for (auto p : procs)
    for (double t : times) sel.push_back({p, t});

  // simulator side
  std::vector<std::vector<double>> rows(reps, std::vector<double>(sel.size(), 0.0));
  const double sqrtN = std::sqrt(static_cast<double>(N));
  const double invN = 1.0 / static_cast<double>(N);
  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
    auto tr = simulate_epidemic(sc, detail::rep_seed(seed, 0xc17, r));
    for (std::size_t k = 0; k < sel.size(); ++k) {
      std::size_t node = grid.index_of(sel[k].time);
      rows[r][k] = sqrtN * (detail::traj_value(tr, sel[k].proc, node, invN) -
                            detail::limit_value(limit_fine, sel[k].proc, node));
    }
  });
  CovEstimate sim_cov = sample_covariance(rows);

  // limit side
  Grid kgrid = Grid::over(base.horizon, kernel_step);
  FllnSolution flln_kernel = solve_flln_nested(sc, kgrid, 0.0025);
  CovKernelSet ks = build_covariance_kernels(sc, flln_kernel, kgrid);
  DriverEnsemble drivers = sample_gaussian_drivers(ks, derive_seed(seed, 0xd71), reps);
  FcltEnsemble ens = solve_fclt_paths(drivers, ks);
  CovEstimate lim_cov = limit_covariance_estimate(ens, sel);

  ZTable zt = compare_covariances(sim_cov, lim_cov);

  bool pass = true;
  nlohmann::json vars = nlohmann::json::array();
  const std::size_t d = sel.size();
  for (std::size_t k = 0; k < d; ++k) {
    double vs = sim_cov.at(k, k), vl = lim_cov.at(k, k);
    double se = std::sqrt(sim_cov.se_at(k, k) * sim_cov.se_at(k, k) +
                          lim_cov.se_at(k, k) * lim_cov.se_at(k, k));
    double tol = std::max(0.15 * std::abs(vl), 4.0 * se);
    bool ok = std::abs(vs - vl) <= tol;
    pass = pass && ok;
    vars.push_back({{"process", process_name(sel[k].proc)},
                    {"time", sel[k].time},
                    {"var_sim", vs},
                    {"se_sim", sim_cov.se_at(k, k)},
                    {"var_limit", vl},
                    {"se_limit", lim_cov.se_at(k, k)},
                    {"tol", tol},
                    {"ok", ok}});
  }
  nlohmann::json cors = nlohmann::json::array();
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = k + 1; l < d; ++l) {
      double denom_s = std::sqrt(sim_cov.at(k, k) * sim_cov.at(l, l));
      double denom_l = std::sqrt(lim_cov.at(k, k) * lim_cov.at(l, l));
      if (denom_s <= 0.0 || denom_l <= 0.0) continue;
      double rs = sim_cov.at(k, l) / denom_s, rl = lim_cov.at(k, l) / denom_l;
      bool ok = std::abs(rs - rl) <= 0.1;
      pass = pass && ok;
      cors.push_back({{"a", process_name(sel[k].proc)},
                      {"ta", sel[k].time},
                      {"b", process_name(sel[l].proc)},
                      {"tb", sel[l].time},
                      {"corr_sim", rs},
                      {"corr_limit", rl},
                      {"ok", ok}});
    }
  rep.stats = {{"N", N},
               {"reps", reps},
               {"times", times},
               {"variances", vars},
               {"correlations", cors},
               {"max_abs_z", zt.max_abs},
               {"driver_jitter", drivers.jitter}};
  rep.pass = pass;
  rep.wall_seconds = watch.seconds();
  return rep;
}

// --- PRM mixed-moment identity ---------------------------------------------

// Step functions on the plane as finite lists of disjoint weighted boxes.
struct StepFunction2d {
  struct Box {
    double x0, x1, y0, y1, value;
  };
  std::vector<Box> boxes;

  double eval(double x, double y) const {
    for (const auto& b : boxes)
      if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) return b.value;
    return 0.0;
  }
};

namespace detail {

inline double box_overlap(const StepFunction2d::Box& a, const StepFunction2d::Box& b) {
  double dx = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  double dy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return dx > 0.0 && dy > 0.0 ? dx * dy : 0.0;
}

// integral of f^p g^q against Lebesgue measure
inline double product_integral(const StepFunction2d& f, int p, const StepFunction2d& g, int q) {
  double total = 0.0;
  if (q == 0) {
    for (const auto& a : f.boxes)
      total += std::pow(a.value, p) * (a.x1 - a.x0) * (a.y1 - a.y0);
    return total;
  }
  for (const auto& a : f.boxes)
    for (const auto& b : g.boxes)
      total += std::pow(a.value, p) * std::pow(b.value, q) * box_overlap(a, b);
  return total;
}

inline int sample_poisson(Rng& rng, double mu) {
  int total = 0;
  while (mu > 30.0) {
    // split to keep the Knuth product away from underflow
    double half = mu * 0.5;
    total += sample_poisson(rng, half);
    mu -= half;
  }
  double limit = std::exp(-mu), prod = uniform01_pos(rng);
  int k = 0;
  while (prod > limit) {
    prod *= uniform01_pos(rng);
    ++k;
  }
  return total + k;
}

}  // namespace detail

// Monte Carlo check of E[(int f dQbar)^2 (int g dQbar)^2] against
// int f^2 g^2 + 2 (int f g)^2 + int f^2 * int g^2 for a unit-rate PRM.
inline McReport prm_moment_check(
    const std::vector<std::pair<StepFunction2d, StepFunction2d>>& configs, std::size_t draws,
    std::uint64_t seed) {
  if (draws < 10'000) throw std::invalid_argument("prm_moment_check: draws must be >= 1e4");
  detail::StopWatch watch;
  McReport rep;
  rep.experiment = "prm-moment";
  rep.seed = seed;
  bool pass = true;
  nlohmann::json cases = nlohmann::json::array();
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const auto& f = configs[ci].first;
    const auto& g = configs[ci].second;
    double closed = detail::product_integral(f, 2, g, 2) +
                    2.0 * std::pow(detail::product_integral(f, 1, g, 1), 2) +
                    detail::product_integral(f, 2, g, 0) * detail::product_integral(g, 2, f, 0);
    // bounding box of the union support
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto* fn : {&f, &g})
      for (const auto& b : fn->boxes) {
        x0 = std::min(x0, b.x0);
        x1 = std::max(x1, b.x1);
        y0 = std::min(y0, b.y0);
        y1 = std::max(y1, b.y1);
      }
    double int_f = detail::product_integral(f, 1, g, 0);
    double int_g = detail::product_integral(g, 1, f, 0);
    RunningStats rs;
    if (x1 <= x0 || y1 <= y0) {
      rs.add(0.0);
      rs.add(0.0);
    } else {
      double area = (x1 - x0) * (y1 - y0);
      Rng rng = engine_for(seed, 0x9137 + ci);
      for (std::size_t dck = 0; dck < draws; ++dck) {
        int k = detail::sample_poisson(rng, area);
        double F = -int_f, G = -int_g;
        for (int pt = 0; pt < k; ++pt) {
          double x = x0 + (x1 - x0) * uniform01(rng);
          double y = y0 + (y1 - y0) * uniform01(rng);
          F += f.eval(x, y);
          G += g.eval(x, y);
        }
        rs.add(F * F * G * G);
      }
    }
    double se = rs.se_of_mean();
    bool ok = std::abs(rs.mean - closed) <= 3.0 * std::max(se, 1e-12);
    pass = pass && ok;
    cases.push_back({{"case", ci},
                     {"closed_form", closed},
                     {"mc_estimate", rs.mean},
                     {"se", se},
                     {"ok", ok}});
  }
  rep.stats = {{"draws", draws}, {"cases", cases}};
  rep.pass = pass;
  rep.wall_seconds = watch.seconds();
  return rep;
}

// The default five-pair battery: overlapping, nested, disjoint supports,
// two-level steps, and a zero function.
inline std::vector<std::pair<StepFunction2d, StepFunction2d>> default_prm_battery() {
  using B = StepFunction2d::Box;
  StepFunction2d unit{{B{0, 1, 0, 1, 1.0}}};
  StepFunction2d shifted{{B{1, 2, 0, 1, 1.0}}};
  StepFunction2d wide{{B{0, 1.5, 0, 1, 1.0}}};
  StepFunction2d overlap{{B{0.5, 2, 0, 1, 1.0}}};
  StepFunction2d twolevel{{B{0, 0.5, 0, 1, 2.0}, B{0.5, 1, 0, 1, 0.5}}};
  StepFunction2d nested{{B{0.25, 0.75, 0.25, 0.75, 1.5}}};
  StepFunction2d zero{};
  return {{unit, unit}, {unit, shifted}, {wide, overlap}, {twolevel, nested}, {unit, zero}};
}

}  // namespace varinf
