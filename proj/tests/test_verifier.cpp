#include <catch2/catch.hpp>

#include "varinf/verify.hpp"

using namespace varinf;

namespace {

Scenario markov_sir(std::int64_t N = 500) {
  Scenario sc;
  sc.variant = Variant::SIR;
  sc.population = N;
  sc.horizon = 10.0;
  sc.output_step = 0.1;
  sc.i0_frac = 0.01;
  sc.model = InfectivityModel::constant_markov(0.5, 0.2);
  sc.model0I = InfectivityModel::constant_markov(0.5, 0.2, RoleTag::InitiallyInfectious);
  return sc;
}

}  // namespace

TEST_CASE("compare_covariances arithmetic") {
  CovEstimate A;
  A.dim = 2;
  A.value = {1.0, 0.2, 0.2, 2.0};
  A.se = {0.1, 0.05, 0.05, 0.1};
  CovEstimate B = A;
  auto z0 = compare_covariances(A, B);
  CHECK(z0.max_abs == 0.0);

  B.value[0] += 10.0 * A.se[0];  // shift one entry by ten of its own SEs
  auto z1 = compare_covariances(A, B);
  CHECK(std::abs(z1.max_abs - 10.0 / std::sqrt(2.0)) < 1e-9);  // 7.0710...

  // symmetric inputs give a symmetric z table
  CHECK(z1.z[1] == z1.z[2]);
  CovEstimate C;
  C.dim = 3;
  CHECK_THROWS_AS(compare_covariances(A, C), std::invalid_argument);
}

TEST_CASE("PRM mixed-moment battery") {
  auto battery = default_prm_battery();
  McReport rep = prm_moment_check(battery, 100'000, 7);
  INFO(rep.stats.dump(2));
  CHECK(rep.pass);
  // frozen closed forms: unit square f = g = 1 gives 1 + 2 + 1 = 4 (the
  // centered fourth moment of a unit Poisson count); disjoint supports give
  // 0 + 0 + 1 = 1; the zero function gives 0.
  CHECK(rep.stats["cases"][0]["closed_form"].get<double>() == Approx(4.0));
  CHECK(rep.stats["cases"][1]["closed_form"].get<double>() == Approx(1.0));
  CHECK(rep.stats["cases"][4]["closed_form"].get<double>() == Approx(0.0));
  CHECK(std::abs(rep.stats["cases"][4]["mc_estimate"].get<double>()) < 1e-12);
}

TEST_CASE("PRM check is seed-reproducible") {
  auto battery = default_prm_battery();
  auto a = prm_moment_check(battery, 20'000, 3);
  auto b = prm_moment_check(battery, 20'000, 3);
  CHECK(a.stats["cases"][0]["mc_estimate"].get<double>() ==
        b.stats["cases"][0]["mc_estimate"].get<double>());
}

TEST_CASE("LLN experiment: zero infectivity gives zero errors") {
  Scenario sc = markov_sir();
  double tiny = 1e-300;
  sc.model = InfectivityModel::continuous_bump(tiny, DurationLaw::uniform(1.0, 2.0));
  sc.model0I = InfectivityModel::continuous_bump(tiny, DurationLaw::uniform(1.0, 2.0),
                                                 RoleTag::InitiallyInfectious);
  sc.i0_frac = 0.0;
  McReport rep = run_lln_experiment(sc, {100, 400}, 10, 5);
  CHECK(rep.pass);  // all processes identically zero error -> no ratio rows
  CHECK(rep.stats["ratios"].empty());
}

TEST_CASE("LLN experiment converges at the root-N rate") {
  Scenario sc = markov_sir();
  McReport rep = run_lln_experiment(sc, {1000, 4000}, 40, 12);
  INFO(rep.stats.dump(2));
  CHECK(rep.pass);
}

TEST_CASE("doubling replications shrinks the reported standard error") {
  Scenario sc = markov_sir(300);
  sc.horizon = 6.0;
  McReport small = run_lln_experiment(sc, {200, 800}, 40, 17);
  McReport big = run_lln_experiment(sc, {200, 800}, 160, 17);
  double se_small = small.stats["per_N"][0]["S"]["se"].get<double>();
  double se_big = big.stats["per_N"][0]["S"]["se"].get<double>();
  double ratio = se_big / se_small;  // expect ~ 1/2
  CHECK(ratio > 0.5 / 1.3);
  CHECK(ratio < 0.5 * 1.3);
}

TEST_CASE("LLN experiment on non-exponential duration laws") {
  // gamma-distributed latency, lognormal infectious periods: the fully
  // non-Markovian pipeline end to end.
  Scenario sc;
  sc.variant = Variant::SEIR;
  sc.horizon = 12.0;
  sc.output_step = 0.25;
  sc.e0_frac = 0.005;
  sc.i0_frac = 0.005;
  sc.model = InfectivityModel::piecewise_indicator(0.6, DurationLaw::gamma(2.0, 1.0),
                                                   DurationLaw::log_normal(1.2, 0.5));
  sc.model0 = sc.model;
  sc.model0.role_tag = RoleTag::InitiallyExposed;
  sc.model0I = InfectivityModel::piecewise_indicator(
      0.6, DurationLaw::point(0.0), DurationLaw::log_normal(1.2, 0.5),
      RoleTag::InitiallyInfectious);
  McReport rep = run_lln_experiment(sc, {1000, 4000}, 30, 0x90a);
  INFO(rep.stats.dump(2));
  CHECK(rep.pass);
}

TEST_CASE("prelimit fluctuations sum to zero exactly") {
  Scenario sc = markov_sir(400);
  sc.output_step = 0.5;
  auto tr = simulate_epidemic(sc, 9);
  Grid grid = sc.output_grid();
  FllnSolution limit = solve_flln_nested(sc, grid);
  double sqrtN = std::sqrt(static_cast<double>(sc.population));
  double invN = 1.0 / static_cast<double>(sc.population);
  for (std::size_t k = 0; k < grid.nodes; ++k) {
    double fs = sqrtN * (static_cast<double>(tr.S[k]) * invN - limit.S[k]);
    double fe = sqrtN * (static_cast<double>(tr.E[k]) * invN - limit.E[k]);
    double fi = sqrtN * (static_cast<double>(tr.I[k]) * invN - limit.I[k]);
    double fr = sqrtN * (static_cast<double>(tr.R[k]) * invN - limit.R[k]);
    double limit_sum = limit.S[k] + limit.E[k] + limit.I[k] + limit.R[k];
    // the prelimit side sums to exactly N/N = 1
    CHECK(fs + fe + fi + fr == Approx(sqrtN * (1.0 - limit_sum)).margin(1e-9));
  }
}

TEST_CASE("experiment reports are reproducible from their metadata") {
  Scenario sc = markov_sir(200);
  sc.horizon = 5.0;
  McReport a = run_lln_experiment(sc, {100, 400}, 12, 21);
  McReport b = run_lln_experiment(sc, {100, 400}, 12, 21);
  CHECK(a.stats["per_N"] == b.stats["per_N"]);
}

TEST_CASE("comparing an ensemble against itself gives zero z-scores") {
  Scenario sc = markov_sir();
  Grid kg = Grid::over(sc.horizon, 0.2);
  auto ks = build_covariance_kernels(sc, solve_flln_nested(sc, kg, 0.005), kg);
  auto ens = solve_fclt_paths(sample_gaussian_drivers(ks, 2, 200), ks);
  std::vector<ProcessTime> sel = {{ProcessTag::S, 2.0}, {ProcessTag::I, 5.0}};
  auto est = limit_covariance_estimate(ens, sel);
  auto z = compare_covariances(est, est);
  CHECK(z.max_abs == 0.0);
}
