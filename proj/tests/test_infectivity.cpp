#include <catch2/catch.hpp>

#include "varinf/infectivity.hpp"
#include "varinf/moments.hpp"

using namespace varinf;

namespace {

InfectivityModel cm(double beta = 0.5, double gamma = 0.2) {
  return InfectivityModel::constant_markov(beta, gamma);
}

InfectivityModel pw(double beta = 0.5, double zrate = 0.5, double erate = 0.2) {
  return InfectivityModel::piecewise_indicator(beta, DurationLaw::exponential(zrate),
                                               DurationLaw::exponential(erate));
}

// Monte Carlo oracle over sampled paths, independent of the closed forms.
template <class F>
std::pair<double, double> mc_path_mean(const InfectivityModel& m, std::size_t M,
                                       std::uint64_t seed, F&& f) {
  RunningStats rs;
  for (std::size_t i = 0; i < M; ++i) rs.add(f(sample_path(m, derive_seed(seed, i))));
  return {rs.mean, rs.se_of_mean()};
}

}  // namespace

TEST_CASE("constant-markov path starts at beta and is deterministic in the seed") {
  auto m = cm();
  auto p = sample_path(m, 7);
  CHECK(p.zeta == 0.0);
  CHECK(p.eta > 0.0);
  CHECK(p.eval(0.0) == 0.5);
  auto q = sample_path(m, 7);
  CHECK(p.eval(0.3) == q.eval(0.3));
  CHECK(p.zeta == q.zeta);
  CHECK(p.eta == q.eta);
  CHECK(p.chi == q.chi);
  auto r = sample_path(m, 8);
  CHECK(p.chi != r.chi);
}

TEST_CASE("piecewise-indicator durations have the configured law") {
  auto m = pw();
  auto [mz, sez] = mc_path_mean(m, 1'000'000, 11,
                                [](const InfectivityPath& p) { return p.zeta; });
  CHECK(std::abs(mz - 2.0) < 3.0 * sez);
  auto [me, see] = mc_path_mean(m, 200'000, 12,
                                [](const InfectivityPath& p) { return p.eta; });
  CHECK(std::abs(me - 5.0) < 4.0 * see);
}

TEST_CASE("path evaluation: support, right-continuity, bump peak") {
  auto bump = InfectivityModel::continuous_bump(1.0, DurationLaw::point(2.0));
  auto bp = sample_path(bump, 3);
  CHECK(bp.chi == 2.0);
  CHECK(bp.eval(1.0) == Approx(1.0));       // symmetric peak
  CHECK(bp.eval(2.0) == 0.0);               // support ends at chi
  CHECK(bp.eval(1.9999) > 0.0);

  auto p = sample_path(pw(), 21);
  double z = p.zeta;
  REQUIRE(z > 0.0);
  CHECK(p.eval(z) == 0.5);                  // right-continuous at the jump
  CHECK(p.eval(z * (1.0 - 1e-9)) == 0.0);
  CHECK(p.eval(p.chi) == 0.0);

  auto d = path_durations(p);
  CHECK(d.chi == Approx(d.zeta + d.eta));
  auto dm = path_durations(sample_path(cm(), 5));
  CHECK(dm.zeta == 0.0);
  CHECK(dm.eta == dm.chi);
  auto db = path_durations(bp);
  CHECK(db.zeta == 0.0);
  CHECK(db.chi == 2.0);
}

TEST_CASE("boundedness and support over many sampled paths") {
  std::vector<InfectivityModel> models = {
      cm(), pw(), InfectivityModel::continuous_bump(0.8, DurationLaw::uniform(1.0, 3.0)),
      InfectivityModel::piecewise_indicator(0.6, DurationLaw::gamma(2.0, 1.0),
                                            DurationLaw::log_normal(0.3, 0.4))};
  for (const auto& m : models) {
    for (std::size_t i = 0; i < 10'000; ++i) {
      auto p = sample_path(m, derive_seed(0xb0b0, i));
      REQUIRE(p.chi < 1e9);
      REQUIRE(p.zeta >= 0.0);
      REQUIRE(p.zeta < p.chi);
      for (double t = 0.0; t < p.chi * 1.05 + 0.5; t += p.chi / 37.0 + 1e-3) {
        double v = p.eval(t);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= m.lambda_star + 1e-12);
        if (t < p.zeta || t >= p.chi) REQUIRE(v == 0.0);
      }
    }
  }
}

TEST_CASE("mean infectivity: closed forms against the Monte Carlo oracle") {
  auto m = cm();
  CHECK(mean_infectivity(m, 0.0).value == Approx(0.5));
  double frozen = 0.18393972058572117;  // 0.5 * exp(-1)
  CHECK(mean_infectivity(m, 5.0).value == Approx(frozen).epsilon(1e-12));
  auto [mc, se] = mc_path_mean(m, 1'000'000, 31,
                               [](const InfectivityPath& p) { return p.eval(5.0); });
  CHECK(std::abs(mean_infectivity(m, 5.0).value - mc) < 3.0 * se);
  CHECK(mean_infectivity(m, 200.0).value < 1e-12);

  auto pwm = pw();
  for (double t : {0.5, 2.0, 8.0}) {
    auto [om, ose] = mc_path_mean(pwm, 400'000, 32,
                                  [t](const InfectivityPath& p) { return p.eval(t); });
    CHECK(std::abs(mean_infectivity(pwm, t).value - om) < 4.0 * ose);
  }

  auto bump = InfectivityModel::continuous_bump(0.8, DurationLaw::uniform(1.0, 3.0));
  for (double t : {0.5, 1.5, 2.5}) {
    auto [om, ose] = mc_path_mean(bump, 400'000, 33,
                                  [t](const InfectivityPath& p) { return p.eval(t); });
    CHECK(std::abs(mean_infectivity(bump, t).value - om) < 4.0 * ose);
  }
}

TEST_CASE("covariance of the infectivity: closed form, symmetry, positivity") {
  auto m = cm();
  double frozen = 0.04523304873064602;  // 0.25 (e^{-0.6} - e^{-1})
  CHECK(cov_infectivity(m, 2.0, 3.0).value == Approx(frozen).epsilon(1e-12));
  CHECK(cov_infectivity(m, 3.0, 2.0).value == Approx(frozen).epsilon(1e-12));
  CHECK(cov_infectivity(m, 4.0, 4.0).value >= 0.0);

  Rng rng = engine_for(41);
  RunningStats prod, a, b;
  for (std::size_t i = 0; i < 1'000'000; ++i) {
    auto p = detail::sample_path_impl(m, rng);
    double x = p.eval(2.0), y = p.eval(3.0);
    prod.add(x * y);
    a.add(x);
    b.add(y);
  }
  double mc_cov = prod.mean - a.mean * b.mean;
  CHECK(std::abs(mc_cov - frozen) < 4.0 * prod.se_of_mean());

  auto pwm = pw();
  CHECK(cov_infectivity(pwm, 1.0, 4.0).value ==
        Approx(cov_infectivity(pwm, 4.0, 1.0).value).margin(1e-15));
  CHECK(cov_infectivity(pwm, 3.0, 3.0).value >= 0.0);
}

TEST_CASE("joint indicator moments partition the mean") {
  for (const auto& m :
       {cm(), pw(), InfectivityModel::continuous_bump(0.8, DurationLaw::uniform(1.0, 3.0))}) {
    for (double t : {0.3, 1.0, 2.5})
      for (double t2 : {0.3, 1.0, 2.5, 6.0}) {
        double sum = joint_indicator_moment(m, t, t2, Region::Exposed).value +
                     joint_indicator_moment(m, t, t2, Region::Infectious).value +
                     joint_indicator_moment(m, t, t2, Region::Recovered).value;
        CHECK(sum == Approx(mean_infectivity(m, t).value).margin(1e-12));
      }
  }
}

TEST_CASE("joint indicator moments: closed form and Monte Carlo oracle") {
  auto m = cm(0.5, 0.2);
  // lambda(t) > 0 forces eta > t, so for t2 >= t the infectious moment is
  // beta e^{-gamma t2}.
  for (double t : {1.0, 2.0})
    for (double t2 : {2.0, 4.0})
      CHECK(joint_indicator_moment(m, t, t2, Region::Infectious).value ==
            Approx(0.5 * std::exp(-0.2 * t2)).epsilon(1e-12));
  CHECK(joint_indicator_moment(m, 1.0, 500.0, Region::Exposed).value == 0.0);

  auto pwm = pw();
  for (auto region : {Region::Exposed, Region::Infectious, Region::Recovered}) {
    double t = 1.5, t2 = 2.5;
    auto [om, ose] = mc_path_mean(pwm, 400'000, 55, [&](const InfectivityPath& p) {
      bool in = region == Region::Exposed      ? p.zeta > t2
                : region == Region::Infectious ? (p.zeta <= t2 && t2 < p.chi)
                                               : p.chi <= t2;
      return in ? p.eval(t) : 0.0;
    });
    CHECK(std::abs(joint_indicator_moment(pwm, t, t2, region).value - om) <
          4.0 * std::max(ose, 1e-6));
  }
}

TEST_CASE("sojourn table: hypoexponential closed form and empirical oracle") {
  auto m = pw(0.5, 0.5, 0.2);
  Grid grid = Grid::over(20.0, 0.25);
  auto table = compute_sojourn_table(m, m, cm(), grid);

  // Phi(t) = 1 - (0.5 e^{-0.2 t} - 0.2 e^{-0.5 t}) / 0.3
  for (std::size_t k = 0; k < grid.nodes; k += 7) {
    double t = grid.time(k);
    double phi = 1.0 - (0.5 * std::exp(-0.2 * t) - 0.2 * std::exp(-0.5 * t)) / 0.3;
    CHECK(table.Phi[k] == Approx(phi).margin(1e-9));
  }

  // empirical CDF oracle
  Rng rng = engine_for(77);
  const std::size_t M = 1'000'000;
  std::vector<double> chis(M);
  for (auto& c : chis) c = detail::sample_path_impl(m, rng).chi;
  std::sort(chis.begin(), chis.end());
  for (double t : {2.0, 5.0, 10.0}) {
    double emp = static_cast<double>(std::upper_bound(chis.begin(), chis.end(), t) -
                                     chis.begin()) /
                 static_cast<double>(M);
    std::size_t k = grid.index_of(t);
    CHECK(std::abs(table.Phi[k] - emp) < 4.0 * 0.0005);
  }

  // invariants
  for (std::size_t k = 0; k < grid.nodes; ++k) {
    CHECK(table.G[k] == Approx(table.Phi[k] + table.Psi[k]).margin(1e-12));
    CHECK(table.G[k] >= (k > 0 ? table.G[k - 1] : 0.0) - 1e-12);
    CHECK(table.Phi[k] >= 0.0);
    CHECK(table.Phi[k] <= 1.0 + 1e-12);
  }
  CHECK(table.G.back() == Approx(1.0).margin(1e-4));
  CHECK(table.Psi[0] == 0.0);  // P(zeta = 0) = 0 here

  // Phi(t) = integral F(t - u | u) dG(u) within quadrature tolerance
  for (std::size_t k : {20u, 40u, 60u}) {
    double t = grid.time(k);
    double acc = 0.0;
    for (std::size_t u = 1; u <= k; ++u) {
      double dg = table.G[u] - table.G[u - 1];
      acc += dg * table.fcond(u, k - u);  // F(t - u | u) at cell right edges
    }
    (void)t;
    CHECK(std::abs(acc - table.Phi[k]) < 0.02);
  }
}

TEST_CASE("mean-increment bound holds for the built-in families") {
  // |mean(t) - mean(s)| <= (t-s)^alpha + lambda_star * sum_j (F_j(t) - F_j(s))
  auto check = [](const InfectivityModel& m, auto breakpoint_increment) {
    Rng rng = engine_for(123);
    for (int k = 0; k < 100; ++k) {
      double s = 8.0 * uniform01(rng);
      double dt = 2.0 * uniform01(rng) + 1e-4;
      double lhs = std::abs(mean_infectivity(m, s + dt).value - mean_infectivity(m, s).value);
      double rhs = std::pow(dt, m.regularity.alpha) + m.lambda_star * breakpoint_increment(s, dt);
      INFO("s=" << s << " dt=" << dt);
      CHECK(lhs <= rhs + 1e-12);
    }
  };
  auto m1 = cm(0.5, 0.2);
  check(m1, [&](double s, double dt) {
    return m1.eta_law.cdf(s + dt) - m1.eta_law.cdf(s);  // single breakpoint at eta
  });
  auto m2 = pw(0.5, 0.5, 0.2);
  check(m2, [&](double s, double dt) {
    // breakpoints at zeta and zeta + eta
    double g = m2.zeta_law.cdf(s + dt) - m2.zeta_law.cdf(s);
    auto hypo = [](double t) {
      return 1.0 - (0.5 * std::exp(-0.2 * t) - 0.2 * std::exp(-0.5 * t)) / 0.3;
    };
    return g + hypo(s + dt) - hypo(s);
  });
}

TEST_CASE("aged initial models") {
  auto base = pw(0.5, 0.5, 0.2);

  // zero age, initially exposed: same law as the base (zeta > 0 a.s.)
  auto aged0 = make_aged_initial_model(base, DurationLaw::point(0.0), RoleTag::InitiallyExposed);
  for (double t : {0.5, 2.0, 5.0}) {
    auto est = mean_infectivity(aged0, t, 400'000);
    CHECK(std::abs(est.value - mean_infectivity(base, t).value) < 5.0 * std::max(est.se, 1e-4));
  }

  // initially infectious conditioning yields zeta = 0 paths
  auto agedI = make_aged_initial_model(base, DurationLaw::uniform(0.0, 6.0),
                                       RoleTag::InitiallyInfectious);
  for (std::size_t i = 0; i < 200; ++i) {
    auto p = sample_path(agedI, derive_seed(17, i));
    CHECK(p.zeta == 0.0);
    CHECK(p.eval(0.0) > 0.0);
  }

  // memorylessness: aged constant-markov stays constant-markov
  auto agedCM = make_aged_initial_model(cm(0.5, 0.2), DurationLaw::uniform(0.0, 0.05),
                                        RoleTag::InitiallyInfectious);
  for (double t : {1.0, 4.0}) {
    auto est = mean_infectivity(agedCM, t, 400'000);
    CHECK(std::abs(est.value - 0.5 * std::exp(-0.2 * t)) < 5.0 * std::max(est.se, 1e-4));
  }

  // age mass beyond the support: rejection must fail
  auto bump = InfectivityModel::continuous_bump(1.0, DurationLaw::point(2.0));
  auto bad = make_aged_initial_model(bump, DurationLaw::point(5.0), RoleTag::InitiallyInfectious,
                                     200);
  CHECK_THROWS_AS(sample_path(bad, 1), std::runtime_error);
}

TEST_CASE("invalid model parameters are rejected") {
  CHECK_THROWS_AS(InfectivityModel::constant_markov(-0.5, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(InfectivityModel::constant_markov(0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(InfectivityModel::piecewise_indicator(0.5, DurationLaw::point(1.0),
                                                        DurationLaw::exponential(1.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(InfectivityModel::piecewise_indicator(0.5, DurationLaw::exponential(1.0),
                                                        DurationLaw::point(2.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(InfectivityModel::continuous_bump(0.0, DurationLaw::point(2.0)),
                  std::invalid_argument);
}

TEST_CASE("moment tables agree with the scalar moments") {
  Grid grid = Grid::over(8.0, 0.25);
  for (const auto& m :
       {cm(), pw(), InfectivityModel::continuous_bump(0.8, DurationLaw::uniform(1.0, 3.0))}) {
    ModelMoments mm(m, grid);
    for (std::size_t i : {1u, 9u, 20u, 31u})
      for (std::size_t j : {0u, 5u, 17u, 31u}) {
        double ti = grid.time(i), tj = grid.time(j);
        INFO("family " << static_cast<int>(m.family) << " i=" << i << " j=" << j);
        CHECK(mm.mean(i) == Approx(mean_infectivity(m, ti).value).margin(2e-3));
        double cov_plus = cov_infectivity(m, ti, tj).value +
                          mean_infectivity(m, ti).value * mean_infectivity(m, tj).value;
        CHECK(mm.lambda_lambda(i, j) == Approx(cov_plus).margin(2e-3));
        for (auto r : {Region::Exposed, Region::Infectious, Region::Recovered})
          CHECK(mm.lambda_region(i, j, r) ==
                Approx(joint_indicator_moment(m, ti, tj, r).value).margin(2e-3));
        // partition of the region joints over the first argument
        double colsum = mm.region_region(Region::Exposed, i, Region::Infectious, j) +
                        mm.region_region(Region::Infectious, i, Region::Infectious, j) +
                        mm.region_region(Region::Recovered, i, Region::Infectious, j);
        CHECK(colsum == Approx(mm.marg(Region::Infectious, j)).margin(1e-12));
      }
  }
}

TEST_CASE("aged moment tables match Monte Carlo region probabilities") {
  auto base = pw(0.5, 0.5, 0.2);
  auto aged = make_aged_initial_model(base, DurationLaw::uniform(0.0, 2.0),
                                      RoleTag::InitiallyExposed);
  Grid grid = Grid::over(6.0, 0.5);
  ModelMoments mm(aged, grid, 400'000);
  auto [pE, seE] = mc_path_mean(aged, 200'000, 61, [&](const InfectivityPath& p) {
    return p.zeta > 2.0 ? 1.0 : 0.0;
  });
  std::size_t k = grid.index_of(2.0);
  CHECK(std::abs(mm.marg(Region::Exposed, k) - pE) < 5.0 * std::max(seE, 1e-4));
  double m_at_1 = mm.mean(grid.index_of(1.0));
  auto [mv, mse] = mc_path_mean(aged, 200'000, 62,
                                [](const InfectivityPath& p) { return p.eval(1.0); });
  CHECK(std::abs(m_at_1 - mv) < 5.0 * std::max(mse, 1e-4));
}
