#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "varinf/common.hpp"

namespace varinf {

// Duration laws available for exposed/infectious/immune periods and
// breakpoint variables.  All have closed-form CDFs; sampling is hand-rolled
// so results are reproducible across standard-library implementations.
enum class LawKind { Exponential, Gamma, LogNormal, Uniform, Point };

struct DurationLaw {
  LawKind kind = LawKind::Exponential;
  double p1 = 1.0;  // rate | shape | mu    | lo | value
  double p2 = 0.0;  //      | rate  | sigma | hi |

  static DurationLaw exponential(double rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be > 0");
    return {LawKind::Exponential, rate, 0.0};
  }
  static DurationLaw gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0))
      throw std::invalid_argument("gamma: shape and rate must be > 0");
    return {LawKind::Gamma, shape, rate};
  }
  static DurationLaw log_normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("log_normal: sigma must be > 0");
    return {LawKind::LogNormal, mu, sigma};
  }
  static DurationLaw uniform(double lo, double hi) {
    if (!(0.0 <= lo && lo < hi)) throw std::invalid_argument("uniform: need 0 <= lo < hi");
    return {LawKind::Uniform, lo, hi};
  }
  static DurationLaw point(double value) {
    if (!(value >= 0.0)) throw std::invalid_argument("point: value must be >= 0");
    return {LawKind::Point, value, 0.0};
  }

  double cdf(double t) const {
    if (t < 0.0) return 0.0;
    switch (kind) {
      case LawKind::Exponential: return -std::expm1(-p1 * t);
      case LawKind::Gamma: return gamma_p(p1, p2 * t);
      case LawKind::LogNormal:
        if (t == 0.0) return 0.0;
        return 0.5 * std::erfc(-(std::log(t) - p1) / (p2 * std::sqrt(2.0)));
      case LawKind::Uniform:
        return std::clamp((t - p1) / (p2 - p1), 0.0, 1.0);
      case LawKind::Point: return t >= p1 ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double ccdf(double t) const { return 1.0 - cdf(t); }

  double mean() const {
    switch (kind) {
      case LawKind::Exponential: return 1.0 / p1;
      case LawKind::Gamma: return p1 / p2;
      case LawKind::LogNormal: return std::exp(p1 + 0.5 * p2 * p2);
      case LawKind::Uniform: return 0.5 * (p1 + p2);
      case LawKind::Point: return p1;
    }
    return 0.0;
  }

  // Quantile-like support cutoff: smallest u with ccdf(u) <= eps.
  double support_cutoff(double eps = 1e-12) const {
    if (kind == LawKind::Point) return p1;
    if (kind == LawKind::Uniform) return p2;
    double hi = std::max(mean(), 1e-6);
    while (ccdf(hi) > eps && hi < 1e12) hi *= 2.0;
    double lo = 0.0;
    for (int i = 0; i < 80; ++i) {
      double mid = 0.5 * (lo + hi);
      (ccdf(mid) > eps ? lo : hi) = mid;
    }
    return hi;
  }

  bool has_atom_at_zero() const { return kind == LawKind::Point && p1 == 0.0; }
  bool is_point() const { return kind == LawKind::Point; }

  double sample(Rng& rng) const {
    switch (kind) {
      case LawKind::Exponential: return draw_exponential(rng, p1);
      case LawKind::Gamma: return sample_gamma(rng, p1) / p2;
      case LawKind::LogNormal: return std::exp(p1 + p2 * standard_normal(rng));
      case LawKind::Uniform: return p1 + (p2 - p1) * uniform01(rng);
      case LawKind::Point: return p1;
    }
    return 0.0;
  }

  // Holder modulus of the CDF: F(t) - F(s) <= c * (t-s)^rho.
  // Point masses are not Holder; callers gate where they are allowed.
  void cdf_holder(double& c, double& rho) const {
    switch (kind) {
      case LawKind::Exponential: c = p1; rho = 1.0; return;
      case LawKind::Gamma:
        if (p1 >= 1.0) {
          // Lipschitz with constant = density at the mode.
          double mode = (p1 - 1.0) / p2;
          c = std::exp((p1 - 1.0) * std::log(std::max(mode, 1e-300) * p2) - p2 * mode -
                       std::lgamma(p1)) *
              p2;
          rho = 1.0;
        } else {
          c = std::pow(p2, p1) / std::tgamma(p1 + 1.0);
          rho = p1;
        }
        return;
      case LawKind::LogNormal:
        c = std::exp(0.5 * p2 * p2 - p1) / (p2 * std::sqrt(6.283185307179586));
        rho = 1.0;
        return;
      case LawKind::Uniform: c = 1.0 / (p2 - p1); rho = 1.0; return;
      case LawKind::Point: c = std::numeric_limits<double>::infinity(); rho = 1.0; return;
    }
  }

  std::string name() const {
    switch (kind) {
      case LawKind::Exponential: return "exponential";
      case LawKind::Gamma: return "gamma";
      case LawKind::LogNormal: return "lognormal";
      case LawKind::Uniform: return "uniform";
      case LawKind::Point: return "point";
    }
    return "?";
  }

  bool operator==(const DurationLaw&) const = default;

 private:
  // Marsaglia-Tsang; for shape < 1 uses the boost via U^(1/shape).
  static double sample_gamma(Rng& rng, double shape) {
    if (shape < 1.0) {
      double u = uniform01_pos(rng);
      return sample_gamma(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = standard_normal(rng);
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform01_pos(rng);
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }
};

// Discretized measure used by deterministic Stieltjes integration: an
// optional atom list plus midpoint-weighted bins of the continuous part.
struct DiscretizedLaw {
  std::vector<double> points;
  std::vector<double> weights;

  static DiscretizedLaw from(const DurationLaw& law, std::size_t bins = 2048,
                             double tail_eps = 1e-10) {
    DiscretizedLaw d;
    if (law.is_point()) {
      d.points.push_back(law.p1);
      d.weights.push_back(1.0);
      return d;
    }
    double hi = law.support_cutoff(tail_eps);
    double lo = 0.0;
    d.points.reserve(bins);
    d.weights.reserve(bins);
    double prev_cdf = law.cdf(lo);
    if (prev_cdf > 0.0) {  // defensive; our continuous laws have no atom at 0
      d.points.push_back(0.0);
      d.weights.push_back(prev_cdf);
    }
    const double step = (hi - lo) / static_cast<double>(bins);
    for (std::size_t j = 0; j < bins; ++j) {
      double r = lo + step * static_cast<double>(j + 1);
      double c = law.cdf(r);
      double w = c - prev_cdf;
      if (w > 0.0) {
        d.points.push_back(r - 0.5 * step);
        d.weights.push_back(w);
      }
      prev_cdf = c;
    }
    double tail = 1.0 - prev_cdf;
    if (tail > 0.0) {
      d.points.push_back(hi);
      d.weights.push_back(tail);
    }
    return d;
  }
};

}  // namespace varinf
