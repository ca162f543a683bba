#include <catch2/catch.hpp>

#include "varinf/flln.hpp"
#include "varinf/simulator.hpp"

using namespace varinf;

namespace {

Scenario markov_seir(std::int64_t N = 500) {
  Scenario sc;
  sc.variant = Variant::SEIR;
  sc.population = N;
  sc.horizon = 10.0;
  sc.output_step = 0.5;
  sc.e0_frac = 0.005;
  sc.i0_frac = 0.005;
  sc.model = InfectivityModel::piecewise_indicator(0.5, DurationLaw::exponential(0.4),
                                                   DurationLaw::exponential(0.2));
  sc.model0 = sc.model;
  sc.model0.role_tag = RoleTag::InitiallyExposed;
  sc.model0I = InfectivityModel::constant_markov(0.5, 0.2, RoleTag::InitiallyInfectious);
  return sc;
}

Scenario markov_sir(std::int64_t N = 500) {
  Scenario sc;
  sc.variant = Variant::SIR;
  sc.population = N;
  sc.horizon = 10.0;
  sc.output_step = 0.5;
  sc.i0_frac = 0.01;
  sc.model = InfectivityModel::constant_markov(0.5, 0.2);
  sc.model0I = InfectivityModel::constant_markov(0.5, 0.2, RoleTag::InitiallyInfectious);
  return sc;
}

Scenario markov_sis(std::int64_t N = 400) {
  Scenario sc = markov_sir(N);
  sc.variant = Variant::SIS;
  sc.i0_frac = 0.05;
  sc.model = InfectivityModel::constant_markov(0.8, 0.5);
  sc.model0I = InfectivityModel::constant_markov(0.8, 0.5, RoleTag::InitiallyInfectious);
  return sc;
}

Scenario markov_sirs(std::int64_t N = 400) {
  Scenario sc = markov_sis(N);
  sc.variant = Variant::SIRS;
  sc.immune_law = DurationLaw::exponential(0.7);
  sc.immune0_law = DurationLaw::exponential(0.7);
  sc.r0_frac = 0.02;
  return sc;
}

Scenario bump_sir(std::int64_t N = 300) {
  Scenario sc;
  sc.variant = Variant::SIR;
  sc.population = N;
  sc.horizon = 8.0;
  sc.output_step = 0.5;
  sc.i0_frac = 0.02;
  sc.model = InfectivityModel::continuous_bump(0.9, DurationLaw::uniform(1.0, 4.0));
  sc.model0I = InfectivityModel::continuous_bump(0.9, DurationLaw::uniform(1.0, 4.0),
                                                 RoleTag::InitiallyInfectious);
  return sc;
}

}  // namespace

TEST_CASE("no infection sources means nothing happens") {
  Scenario sc = markov_seir();
  sc.e0_frac = 0.0;
  sc.i0_frac = 0.0;
  auto tr = simulate_epidemic(sc, 3);
  CHECK(tr.events.empty());
  for (std::size_t k = 0; k < tr.grid.nodes; ++k) {
    CHECK(tr.S[k] == sc.population);
    CHECK(tr.foi[k] == 0.0);
  }
}

TEST_CASE("vanishing infectivity keeps every susceptible uninfected") {
  Scenario sc = markov_sir();
  sc.i0_frac = 0.5;
  double tiny = 1e-300;
  sc.model0I = InfectivityModel::continuous_bump(tiny, DurationLaw::uniform(1.0, 2.0),
                                                 RoleTag::InitiallyInfectious);
  sc.model = InfectivityModel::continuous_bump(tiny, DurationLaw::uniform(1.0, 2.0));
  auto tr = simulate_epidemic(sc, 5);
  CHECK(tr.events.empty());
  CHECK(tr.S.front() == tr.S.back());
  // infected pool only decays by recoveries
  for (std::size_t k = 1; k < tr.grid.nodes; ++k) CHECK(tr.I[k] <= tr.I[k - 1]);
  CHECK(tr.I.back() == 0);  // uniform(1,2) support ends before T = 10
}

TEST_CASE("seed determinism and seed sensitivity") {
  Scenario sc = markov_seir();
  auto a = simulate_epidemic(sc, 42);
  auto b = simulate_epidemic(sc, 42);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time == b.events[i].time);
    CHECK(a.events[i].zeta == b.events[i].zeta);
    CHECK(a.events[i].eta == b.events[i].eta);
  }
  auto c = simulate_epidemic(sc, 43);
  CHECK(a.events.size() != c.events.size());
}

TEST_CASE("conservation and monotonicity for every variant") {
  auto scenarios = {markov_seir(), markov_sir(), markov_sis(), markov_sirs(), bump_sir()};
  for (const auto& sc : scenarios) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto tr = simulate_epidemic(sc, seed);
      for (std::size_t k = 0; k < tr.grid.nodes; ++k) {
        REQUIRE(tr.S[k] + tr.E[k] + tr.I[k] + tr.R[k] == sc.population);
        REQUIRE(tr.S[k] >= 0);
        REQUIRE(tr.E[k] >= 0);
        REQUIRE(tr.I[k] >= 0);
        REQUIRE(tr.R[k] >= 0);
        REQUIRE(tr.foi[k] >= 0.0);
        REQUIRE(tr.upsilon[k] ==
                static_cast<double>(tr.S[k]) / static_cast<double>(sc.population) * tr.foi[k]);
      }
      for (std::size_t i = 1; i < tr.events.size(); ++i)
        REQUIRE(tr.events[i].time > tr.events[i - 1].time);
      if (sc.variant == Variant::SIR || sc.variant == Variant::SEIR) {
        for (std::size_t k = 1; k < tr.grid.nodes; ++k) REQUIRE(tr.S[k] <= tr.S[k - 1]);
        REQUIRE(static_cast<std::int64_t>(tr.events.size()) <=
                sc.population - sc.initial_exposed() - sc.initial_infectious() -
                    sc.initial_removed());
      }
    }
  }
}

TEST_CASE("force of infection is bounded by lambda_star times the active count") {
  // For SEIR/SIR the individuals with infection age < chi are exactly E + I.
  for (const auto& sc : {markov_seir(300), markov_sir(300), bump_sir(300)}) {
    for (std::uint64_t seed = 3; seed < 6; ++seed) {
      auto tr = simulate_epidemic(sc, seed);
      double lam_star = std::max(sc.model.lambda_star, sc.model0I.lambda_star);
      for (std::size_t k = 0; k < tr.grid.nodes; ++k) {
        double active = static_cast<double>(tr.E[k] + tr.I[k]);
        CHECK(tr.foi[k] <= lam_star * active + 1e-9);
        CHECK(tr.foi[k] >= 0.0);
      }
    }
  }
}

TEST_CASE("count_processes reproduces the indicator definitions") {
  Grid grid = Grid::over(8.0, 0.5);
  std::vector<InfectionRecord> events = {{1.0, 2.0, 3.0, 0}};
  std::vector<InitialRecord> initials;
  std::vector<std::int64_t> S, E, I, R;
  count_processes(events, initials, Variant::SEIR, 10, grid, S, E, I, R);
  auto at = [&](double t) { return grid.index_of(t); };
  // before the infection
  CHECK(S[at(0.5)] == 10);
  CHECK(E[at(0.5)] == 0);
  // exposed on [1, 3), infectious on [3, 6), recovered from 6
  CHECK(E[at(2.5)] == 1);
  CHECK(I[at(2.5)] == 0);
  CHECK(E[at(3.0)] == 0);
  CHECK(I[at(3.5)] == 1);
  CHECK(I[at(6.0)] == 0);
  CHECK(R[at(6.5)] == 1);
  CHECK(S[at(6.5)] == 9);
  for (std::size_t k = 0; k < grid.nodes; ++k) CHECK(S[k] + E[k] + I[k] + R[k] == 10);
}

TEST_CASE("count_processes: initial compartments at time zero") {
  Grid grid = Grid::over(2.0, 0.5);
  std::vector<InfectionRecord> events;
  std::vector<InitialRecord> initials = {{InitialRecord::Exposed, 1.0, 2.0},
                                         {InitialRecord::Exposed, 0.4, 1.0},
                                         {InitialRecord::Infectious, 1.5, 0.0},
                                         {InitialRecord::Immune,
                                          std::numeric_limits<double>::infinity(), 0.0}};
  std::vector<std::int64_t> S, E, I, R;
  count_processes(events, initials, Variant::SEIR, 20, grid, S, E, I, R);
  CHECK(S[0] == 16);
  CHECK(E[0] == 2);
  CHECK(I[0] == 1);
  CHECK(R[0] == 1);
}

TEST_CASE("count_processes: SIS and SIRS return to susceptible") {
  Grid grid = Grid::over(6.0, 0.5);
  std::vector<InfectionRecord> events = {{1.0, 0.0, 2.0, 0}};
  std::vector<InitialRecord> none;
  std::vector<std::int64_t> S, E, I, R;
  count_processes(events, none, Variant::SIS, 5, grid, S, E, I, R);
  auto at = [&](double t) { return grid.index_of(t); };
  CHECK(I[at(1.5)] == 1);
  CHECK(S[at(1.5)] == 4);
  CHECK(I[at(3.0)] == 0);  // back to susceptible at tau + eta = 3
  CHECK(S[at(3.0)] == 5);
  CHECK(R[at(5.0)] == 0);

  // SIRS: infectious 1.5, immune 2.0
  std::vector<InfectionRecord> ev2 = {{1.0, 1.5, 2.0, 0}};
  count_processes(ev2, none, Variant::SIRS, 5, grid, S, E, I, R);
  CHECK(I[at(2.0)] == 1);
  CHECK(I[at(2.5)] == 0);
  CHECK(R[at(2.5)] == 1);  // immune on [2.5, 4.5)
  CHECK(R[at(4.0)] == 1);
  CHECK(R[at(4.5)] == 0);
  CHECK(S[at(4.5)] == 5);
}

TEST_CASE("aggregate infectivity sums the active paths") {
  auto m = InfectivityModel::constant_markov(0.5, 0.2);
  std::vector<detail::AgentPath> agents;
  for (std::uint64_t s = 0; s < 3; ++s) agents.push_back({0.0, sample_path(m, s)});
  double expected = 0.0;
  for (const auto& a : agents) expected += a.path.eval(0.0);
  CHECK(aggregate_infectivity(agents, 0.0) == Approx(expected));
  CHECK(aggregate_infectivity(agents, 0.0) == Approx(1.5));  // three constant-beta agents
  double beyond = 0.0;
  for (const auto& a : agents) beyond = std::max(beyond, a.path.chi);
  CHECK(aggregate_infectivity(agents, beyond + 1.0) == 0.0);

  std::vector<detail::AgentPath> one = {{0.0, sample_path(m, 9)}};
  CHECK(aggregate_infectivity(one, one[0].path.chi * 0.5) == 0.5);
}

TEST_CASE("event cap guards runaway configurations") {
  Scenario sc;
  sc.variant = Variant::SIS;
  sc.population = 10;
  sc.horizon = 2000.0;
  sc.output_step = 10.0;
  sc.i0_frac = 0.5;
  sc.model = InfectivityModel::constant_markov(50.0, 5.0);
  sc.model0I = InfectivityModel::constant_markov(50.0, 5.0, RoleTag::InitiallyInfectious);
  CHECK_THROWS_AS(simulate_epidemic(sc, 1), std::runtime_error);
}

TEST_CASE("scenario validation rejects broken configurations") {
  Scenario sc = markov_seir();
  sc.e0_frac = 0.7;
  sc.i0_frac = 0.5;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = markov_seir();
  sc.population = 0;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = markov_sir();
  sc.e0_frac = 0.01;
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
  sc = markov_sir();
  sc.model = InfectivityModel::piecewise_indicator(0.5, DurationLaw::exponential(0.4),
                                                   DurationLaw::exponential(0.2));
  CHECK_THROWS_AS(sc.validate(), std::invalid_argument);
}

TEST_CASE("binomial initialization fluctuates around the deterministic counts") {
  Scenario sc = markov_seir(2000);
  sc.binomial_init = true;
  RunningStats e0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto tr = simulate_epidemic(sc, s);
    e0.add(static_cast<double>(tr.E[0]));
  }
  CHECK(std::abs(e0.mean - 10.0) < 5.0);
  CHECK(e0.variance() > 0.0);
}

TEST_CASE("larger populations track the deterministic limit more closely") {
  Scenario sc = markov_seir();
  sc.horizon = 8.0;
  sc.output_step = 0.25;
  Grid grid = sc.output_grid();
  FllnSolution limit = solve_flln_nested(sc, grid);
  auto mean_sup_err = [&](std::int64_t N) {
    Scenario s = sc;
    s.population = N;
    std::vector<double> sup(30, 0.0);
    parallel_for(30, [&](std::size_t r) {
      auto tr = simulate_epidemic(s, derive_seed(0xfeed, r));
      double invN = 1.0 / static_cast<double>(N);
      double worst = 0.0;
      for (std::size_t k = 0; k < grid.nodes; ++k)
        worst = std::max(worst,
                         std::abs(static_cast<double>(tr.I[k]) * invN - limit.I[k]));
      sup[r] = worst;
    });
    RunningStats rs;
    for (double v : sup) rs.add(v);
    return rs.mean;
  };
  CHECK(mean_sup_err(10'000) < mean_sup_err(2'500));
}

TEST_CASE("direct-sum and incremental force-of-infection paths agree in law") {
  // A zero-decay exp_decay profile has the same law as the constant profile
  // but routes through direct summation instead of the incremental sum.
  Scenario inc = markov_seir(600);
  Scenario dir = inc;
  dir.model = InfectivityModel::piecewise_indicator(
      0.5, DurationLaw::exponential(0.4), DurationLaw::exponential(0.2),
      RoleTag::NewlyInfected, ProfileKind::ExpDecay, 0.0);
  dir.model0 = dir.model;
  dir.model0.role_tag = RoleTag::InitiallyExposed;

  RunningStats count_a, count_b;
  for (std::uint64_t s = 0; s < 80; ++s) {
    count_a.add(static_cast<double>(simulate_epidemic(inc, s).events.size()));
    count_b.add(static_cast<double>(simulate_epidemic(dir, s + 5000).events.size()));
  }
  double se = std::sqrt(count_a.se_of_mean() * count_a.se_of_mean() +
                        count_b.se_of_mean() * count_b.se_of_mean());
  CHECK(std::abs(count_a.mean - count_b.mean) < 4.0 * se);
}
