#include <catch2/catch.hpp>

#include "varinf/distributions.hpp"

using namespace varinf;

TEST_CASE("duration law cdfs match hand values") {
  auto e = DurationLaw::exponential(0.5);
  CHECK(e.cdf(0.0) == 0.0);
  CHECK(e.cdf(2.0) == Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(e.mean() == Approx(2.0));

  auto g = DurationLaw::gamma(2.0, 1.0);  // Erlang(2): F(t) = 1 - (1 + t) e^-t
  CHECK(g.cdf(1.5) == Approx(1.0 - 2.5 * std::exp(-1.5)).epsilon(1e-10));
  CHECK(g.mean() == Approx(2.0));

  auto u = DurationLaw::uniform(1.0, 3.0);
  CHECK(u.cdf(2.0) == Approx(0.5));
  CHECK(u.cdf(0.5) == 0.0);
  CHECK(u.cdf(4.0) == 1.0);

  auto p = DurationLaw::point(2.5);
  CHECK(p.cdf(2.4) == 0.0);
  CHECK(p.cdf(2.5) == 1.0);

  auto ln = DurationLaw::log_normal(0.0, 1.0);
  CHECK(ln.cdf(1.0) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sampling matches the law mean within Monte Carlo error") {
  const std::size_t M = 200'000;
  for (auto law : {DurationLaw::exponential(0.5), DurationLaw::gamma(0.7, 1.3),
                   DurationLaw::gamma(3.0, 2.0), DurationLaw::log_normal(0.2, 0.6),
                   DurationLaw::uniform(0.5, 2.5)}) {
    Rng rng = engine_for(99);
    RunningStats rs;
    for (std::size_t i = 0; i < M; ++i) rs.add(law.sample(rng));
    INFO(law.name());
    CHECK(std::abs(rs.mean - law.mean()) < 5.0 * rs.se_of_mean());
  }
}

TEST_CASE("sampled values respect the cdf (Kolmogorov distance)") {
  const std::size_t M = 100'000;
  for (auto law : {DurationLaw::exponential(1.0), DurationLaw::gamma(2.0, 1.5),
                   DurationLaw::log_normal(0.0, 0.5)}) {
    Rng rng = engine_for(7);
    std::vector<double> xs(M);
    for (auto& x : xs) x = law.sample(rng);
    std::sort(xs.begin(), xs.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < M; i += 97) {
      double emp = static_cast<double>(i + 1) / static_cast<double>(M);
      worst = std::max(worst, std::abs(emp - law.cdf(xs[i])));
    }
    INFO(law.name());
    CHECK(worst < 0.01);
  }
}

TEST_CASE("cdf Holder bound holds on a grid") {
  for (auto law : {DurationLaw::exponential(2.0), DurationLaw::gamma(0.6, 1.0),
                   DurationLaw::gamma(2.0, 1.0), DurationLaw::uniform(0.0, 2.0),
                   DurationLaw::log_normal(0.0, 0.8)}) {
    double c = 0.0, rho = 0.0;
    law.cdf_holder(c, rho);
    REQUIRE(rho > 0.0);
    for (double s = 0.0; s < 5.0; s += 0.13)
      for (double dt : {0.01, 0.1, 0.7}) {
        INFO(law.name() << " s=" << s << " dt=" << dt);
        CHECK(law.cdf(s + dt) - law.cdf(s) <= c * std::pow(dt, rho) + 1e-12);
      }
  }
}

TEST_CASE("discretized law integrates simple functionals") {
  auto law = DurationLaw::exponential(0.5);
  auto d = DiscretizedLaw::from(law);
  double total = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < d.points.size(); ++k) {
    total += d.weights[k];
    mean += d.weights[k] * d.points[k];
  }
  CHECK(total == Approx(1.0).epsilon(1e-9));
  CHECK(mean == Approx(2.0).epsilon(1e-4));
}

TEST_CASE("incomplete gamma agrees with erf at a = 1/2") {
  // gamma_p(1/2, x) = erf(sqrt(x))
  for (double x : {0.1, 0.5, 1.0, 3.0, 10.0})
    CHECK(gamma_p(0.5, x) == Approx(std::erf(std::sqrt(x))).epsilon(1e-10));
}
