#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "varinf/varinf.hpp"

namespace fs = std::filesystem;
using namespace varinf;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<std::size_t> paths;
};

ParsedConfig load_config(const CommonOpts& opts) {
  std::ifstream in(opts.config_path);
  if (!in) throw ConfigError("cannot open config file: " + opts.config_path);
  std::stringstream ss;
  ss << in.rdbuf();
  ParsedConfig cfg = parse_scenario_text(ss.str());
  if (opts.seed) cfg.scenario.seed = *opts.seed;
  if (opts.reps) {
    cfg.scenario.replications = *opts.reps;
    cfg.experiment.reps = *opts.reps;
  }
  if (opts.paths) cfg.experiment.paths = *opts.paths;
  return cfg;
}

fs::path out_dir(const CommonOpts& opts) {
  if (const char* env = std::getenv("VARINF_OUT")) return fs::path(env);
  return fs::path(opts.out_dir);
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "scenario config file");
  if (needs_config) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory (env VARINF_OUT overrides)");
  cmd->add_option("--seed", [&opts](const CLI::results_t& r) {
    opts.seed = std::stoull(r[0]);
    return true;
  }, "seed override (u64)");
  cmd->add_option("--reps", [&opts](const CLI::results_t& r) {
    opts.reps = std::stoi(r[0]);
    return true;
  }, "replication count override");
  cmd->add_option("--paths", [&opts](const CLI::results_t& r) {
    opts.paths = std::stoull(r[0]);
    return true;
  }, "FCLT sample path count override");
}

Grid kernel_grid(const Scenario& sc, double kernel_delta) {
  Grid g = Grid::over(sc.horizon, kernel_delta);
  while (g.nodes > 801) g = Grid::over(sc.horizon, g.step * 2.0);
  return g;
}

int run_simulate(const CommonOpts& opts) {
  ParsedConfig cfg = load_config(opts);
  const Scenario& sc = cfg.scenario;
  fs::path dir = out_dir(opts);
  for (int r = 0; r < sc.replications; ++r) {
    auto tr = simulate_epidemic(sc, derive_seed(sc.seed, static_cast<std::uint64_t>(r)));
    std::string suffix = sc.replications > 1 ? "_" + std::to_string(r) : "";
    io::write_file(dir / ("trajectory" + suffix + ".csv"), io::trajectory_csv(tr));
    io::write_file(dir / ("events" + suffix + ".csv"), io::events_csv(tr));
  }
  std::cout << "wrote " << sc.replications << " trajectory/event file pair(s) under " << dir
            << "\n";
  return 0;
}

int run_flln(const CommonOpts& opts) {
  ParsedConfig cfg = load_config(opts);
  const Scenario& sc = cfg.scenario;
  Grid grid = sc.output_grid();
  FllnSolution sol = solve_flln_nested(sc, grid);
  fs::path dir = out_dir(opts);
  io::write_file(dir / "flln.csv", io::flln_csv(sol));
  io::write_file(dir / "sojourn.csv",
                 io::sojourn_csv(compute_sojourn_table(sc.model, sc.model0, sc.model0I, grid)));
  std::cout << "wrote flln.csv and sojourn.csv under " << dir << "\n";
  return 0;
}

int run_fclt(const CommonOpts& opts) {
  ParsedConfig cfg = load_config(opts);
  const Scenario& sc = cfg.scenario;
  Grid kg = kernel_grid(sc, cfg.experiment.kernel_delta);
  FllnSolution flln = solve_flln_nested(sc, kg, 0.0025);
  CovKernelSet ks = build_covariance_kernels(sc, flln, kg);
  DriverEnsemble drivers = sample_gaussian_drivers(ks, sc.seed, cfg.experiment.paths);
  FcltEnsemble ens = solve_fclt_paths(drivers, ks);

  fs::path dir = out_dir(opts);
  for (std::size_t a = 0; a < ks.procs.size(); ++a)
    for (std::size_t b = a; b < ks.procs.size(); ++b)
      io::write_file(dir / ("kernel_" + std::string(process_name(ks.procs[a])) + "_" +
                            process_name(ks.procs[b]) + ".csv"),
                     io::kernel_block_csv(ks, a, b));
  io::write_file(dir / "ensemble_S.csv", io::ensemble_csv(kg, ens.S));
  io::write_file(dir / "ensemble_FoI.csv", io::ensemble_csv(kg, ens.FoI));
  io::write_file(dir / "ensemble_E.csv", io::ensemble_csv(kg, ens.E));
  io::write_file(dir / "ensemble_I.csv", io::ensemble_csv(kg, ens.I));
  io::write_file(dir / "ensemble_R.csv", io::ensemble_csv(kg, ens.R));
  io::write_file(dir / "ensemble_Upsilon.csv", io::ensemble_csv(kg, ens.Upsilon));

  nlohmann::json summary;
  summary["variant"] = variant_name(sc.variant);
  summary["paths"] = ens.count;
  summary["jitter"] = drivers.jitter;
  nlohmann::json vars = nlohmann::json::array();
  std::vector<ProcessTime> sel;
  for (double t : cfg.experiment.times)
    if (t <= sc.horizon + 1e-12)
      for (ProcessTag p : tracked_processes(sc.variant)) sel.push_back({p, t});
  if (!sel.empty()) {
    CovEstimate est = limit_covariance_estimate(ens, sel);
    for (std::size_t k = 0; k < sel.size(); ++k)
      vars.push_back({{"process", process_name(sel[k].proc)},
                      {"time", sel[k].time},
                      {"variance", est.at(k, k)},
                      {"se", est.se_at(k, k)}});
  }
  summary["variances"] = vars;
  io::write_file(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "wrote kernel blocks, ensembles and summary.json under " << dir << "\n";
  return 0;
}

int run_verify_lln(const CommonOpts& opts) {
  ParsedConfig cfg = load_config(opts);
  McReport rep = run_lln_experiment(cfg.scenario, cfg.experiment.ns, cfg.experiment.reps,
                                    cfg.scenario.seed);
  io::write_report(out_dir(opts), rep);
  std::cout << rep.to_text();
  return rep.pass ? 0 : 2;
}

int run_verify_clt(const CommonOpts& opts) {
  ParsedConfig cfg = load_config(opts);
  McReport rep =
      run_clt_experiment(cfg.scenario, cfg.scenario.population, cfg.experiment.reps,
                         cfg.experiment.times, cfg.scenario.seed, cfg.experiment.kernel_delta);
  io::write_report(out_dir(opts), rep);
  std::cout << rep.to_text();
  return rep.pass ? 0 : 2;
}

int run_verify_prm(const CommonOpts& opts) {
  std::size_t draws = 100'000;
  std::uint64_t seed = 1;
  if (!opts.config_path.empty()) {
    ParsedConfig cfg = load_config(opts);
    draws = cfg.experiment.prm_draws;
    seed = cfg.scenario.seed;
  }
  if (opts.seed) seed = *opts.seed;
  McReport rep = prm_moment_check(default_prm_battery(), draws, seed);
  io::write_report(out_dir(opts), rep);
  std::cout << rep.to_text();
  return rep.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "varinf: epidemic simulation with infection-age dependent infectivity,\n"
      "its deterministic Volterra limits, Gaussian fluctuation limits, and\n"
      "Monte Carlo verification"};
  app.require_subcommand(1);

  CommonOpts o_sim, o_flln, o_fclt, o_vlln, o_vclt, o_vprm;
  auto* c_sim = app.add_subcommand("simulate", "run the N-agent simulator, write CSVs");
  add_common(c_sim, o_sim);
  auto* c_flln = app.add_subcommand("flln", "solve the deterministic limit, write flln.csv");
  add_common(c_flln, o_flln);
  auto* c_fclt =
      app.add_subcommand("fclt", "build covariance kernels, sample limit fluctuation paths");
  add_common(c_fclt, o_fclt);
  auto* c_vlln = app.add_subcommand("verify-lln", "Monte Carlo FLLN convergence check");
  add_common(c_vlln, o_vlln);
  auto* c_vclt = app.add_subcommand("verify-clt", "Monte Carlo FCLT covariance check");
  add_common(c_vclt, o_vclt);
  auto* c_vprm =
      app.add_subcommand("verify-prm", "compensated-PRM mixed-moment identity check");
  add_common(c_vprm, o_vprm, /*needs_config=*/false);

  try {
    app.parse(argc, argv);
    if (*c_sim) return run_simulate(o_sim);
    if (*c_flln) return run_flln(o_flln);
    if (*c_fclt) return run_fclt(o_fclt);
    if (*c_vlln) return run_verify_lln(o_vlln);
    if (*c_vclt) return run_verify_clt(o_vclt);
    if (*c_vprm) return run_verify_prm(o_vprm);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
