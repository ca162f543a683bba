#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "varinf/common.hpp"
#include "varinf/distributions.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// Random infectivity functions.
//
// An individual infected at time tau carries a random function lambda(.) of
// its infection age: zero on [0, zeta), positive on [zeta, chi), zero from
// chi on.  zeta is the exposed period, eta = chi - zeta the infectious
// period.  Model families:
//
//   ConstantMarkov      lambda(t) = beta * 1[t < eta],  eta ~ Exp(gamma)
//   PiecewiseIndicator  lambda(t) = profile(t) * 1[zeta <= t < zeta + eta]
//   ContinuousBump      lambda(t) = (4h/chi^2) t (chi - t) on [0, chi)
//   AgedInitial         base path evaluated from a random initial age
// ---------------------------------------------------------------------------

enum class Family { ConstantMarkov, PiecewiseIndicator, ContinuousBump, AgedInitial };
enum class RoleTag { NewlyInfected, InitiallyExposed, InitiallyInfectious };
enum class ProfileKind { Constant, ExpDecay };
enum class Region { Exposed, Infectious, Recovered };

struct RegularityDescriptor {
  double alpha = 1.0;        // Holder exponent of the continuous pieces (> 1/2)
  double rho = 1.0;          // Holder exponent of the breakpoint CDFs (> 0)
  double holder_const = 1.0; // constant in |lambda^j(t)-lambda^j(s)| <= C (t-s)^alpha
};

struct InfectivityModel {
  Family family = Family::ConstantMarkov;
  RoleTag role_tag = RoleTag::NewlyInfected;
  ProfileKind profile = ProfileKind::Constant;

  double amplitude = 0.0;   // beta (ConstantMarkov/PiecewiseIndicator) or peak h (bump)
  double profile_decay = 0.0;
  double recovery_rate = 0.0;  // gamma for ConstantMarkov
  DurationLaw zeta_law = DurationLaw::point(0.0);
  DurationLaw eta_law = DurationLaw::exponential(1.0);
  DurationLaw chi_law = DurationLaw::exponential(1.0);

  // AgedInitial only.
  std::shared_ptr<const InfectivityModel> base;
  DurationLaw age_law = DurationLaw::point(0.0);
  std::size_t max_age_attempts = 10'000;

  double lambda_star = 0.0;
  int pieces = 1;
  RegularityDescriptor regularity;

  static InfectivityModel constant_markov(double beta, double gamma,
                                          RoleTag role = RoleTag::NewlyInfected) {
    if (!(beta > 0.0) || !(gamma > 0.0))
      throw std::invalid_argument("constant_markov: beta and gamma must be > 0");
    InfectivityModel m;
    m.family = Family::ConstantMarkov;
    m.role_tag = role;
    m.amplitude = beta;
    m.recovery_rate = gamma;
    m.eta_law = DurationLaw::exponential(gamma);
    m.lambda_star = beta;
    m.pieces = 2;  // constant piece, then zero; breakpoint at eta
    m.regularity = {1.0, 1.0, 1.0};
    if (role == RoleTag::InitiallyExposed)
      throw std::invalid_argument("constant_markov: zeta = 0 a.s., cannot be initially exposed");
    return m;
  }

  static InfectivityModel piecewise_indicator(double beta, DurationLaw zeta, DurationLaw eta,
                                              RoleTag role = RoleTag::NewlyInfected,
                                              ProfileKind profile = ProfileKind::Constant,
                                              double profile_decay = 0.0) {
    if (!(beta > 0.0)) throw std::invalid_argument("piecewise_indicator: beta must be > 0");
    if (zeta.is_point() && zeta.p1 != 0.0)
      throw std::invalid_argument(
          "piecewise_indicator: deterministic nonzero zeta breaks the breakpoint-CDF "
          "regularity; use point(0) or a continuous law");
    if (eta.is_point())
      throw std::invalid_argument(
          "piecewise_indicator: deterministic eta breaks the breakpoint-CDF regularity");
    if (profile == ProfileKind::ExpDecay && !(profile_decay >= 0.0))
      throw std::invalid_argument("piecewise_indicator: profile_decay must be >= 0");
    InfectivityModel m;
    m.family = Family::PiecewiseIndicator;
    m.role_tag = role;
    m.profile = profile;
    m.amplitude = beta;
    m.profile_decay = profile == ProfileKind::ExpDecay ? profile_decay : 0.0;
    m.zeta_law = zeta;
    m.eta_law = eta;
    m.lambda_star = beta;
    m.pieces = zeta.has_atom_at_zero() ? 2 : 3;
    double c1 = 0.0, r1 = 1.0, c2 = 0.0, r2 = 1.0;
    zeta.cdf_holder(c1, r1);
    eta.cdf_holder(c2, r2);
    double rho = zeta.has_atom_at_zero() ? r2 : std::min(r1, r2);
    m.regularity = {1.0, rho,
                    profile == ProfileKind::ExpDecay ? std::max(beta * profile_decay, 1.0) : 1.0};
    if (role == RoleTag::InitiallyInfectious && !zeta.has_atom_at_zero())
      throw std::invalid_argument("piecewise_indicator: initially infectious requires zeta = 0");
    return m;
  }

  static InfectivityModel continuous_bump(double peak, DurationLaw chi,
                                          RoleTag role = RoleTag::NewlyInfected) {
    if (!(peak > 0.0)) throw std::invalid_argument("continuous_bump: peak must be > 0");
    if (chi.is_point() && !(chi.p1 > 0.0))
      throw std::invalid_argument("continuous_bump: chi must be positive");
    InfectivityModel m;
    m.family = Family::ContinuousBump;
    m.role_tag = role;
    m.amplitude = peak;
    m.chi_law = chi;
    m.lambda_star = peak;
    m.pieces = 1;
    double chi_min = chi.kind == LawKind::Uniform ? chi.p1
                     : chi.is_point()             ? chi.p1
                                                  : 0.0;
    double c = chi_min > 0.0 ? 4.0 * peak / chi_min : std::numeric_limits<double>::infinity();
    m.regularity = {1.0, 1.0, c};
    if (role == RoleTag::InitiallyExposed)
      throw std::invalid_argument("continuous_bump: zeta = 0 a.s., cannot be initially exposed");
    return m;
  }

  bool zeta_is_zero() const {
    switch (family) {
      case Family::ConstantMarkov:
      case Family::ContinuousBump: return true;
      case Family::PiecewiseIndicator: return zeta_law.has_atom_at_zero();
      case Family::AgedInitial: return role_tag == RoleTag::InitiallyInfectious;
    }
    return false;
  }
};

// A wrapper model whose samples are lambda0(t) = lambda(age + t), with lambda
// from `base` and age from `age_law`, rejection-sampled so that age < chi.
// Conditioning picks the subpopulation: initially exposed keeps age < zeta,
// initially infectious keeps zeta <= age < chi.
inline InfectivityModel make_aged_initial_model(const InfectivityModel& base,
                                                DurationLaw age_law, RoleTag conditioning,
                                                std::size_t max_attempts = 10'000) {
  if (base.role_tag != RoleTag::NewlyInfected)
    throw std::invalid_argument("make_aged_initial_model: base must be a newly-infected model");
  if (conditioning == RoleTag::NewlyInfected)
    throw std::invalid_argument("make_aged_initial_model: conditioning must pick an initial role");
  if (conditioning == RoleTag::InitiallyExposed && base.zeta_is_zero() &&
      !age_law.has_atom_at_zero())
    throw std::invalid_argument(
        "make_aged_initial_model: base has zeta = 0, initially-exposed conditioning is empty");
  InfectivityModel m;
  m.family = Family::AgedInitial;
  m.role_tag = conditioning;
  m.base = std::make_shared<InfectivityModel>(base);
  m.age_law = age_law;
  m.max_age_attempts = max_attempts;
  m.lambda_star = base.lambda_star;
  m.pieces = base.pieces;
  m.regularity = base.regularity;
  return m;
}

// One realization of a random infectivity function.  Durations are the
// remaining ones (after the age shift for aged-initial paths); `age_offset`
// is the infection age the underlying profile is evaluated from.
struct InfectivityPath {
  Family family = Family::ConstantMarkov;
  ProfileKind profile = ProfileKind::Constant;
  double amplitude = 0.0;
  double profile_decay = 0.0;
  double age_offset = 0.0;
  double zeta = 0.0;
  double eta = 0.0;
  double chi = 0.0;

  double eval(double t) const {
    if (t < zeta || t >= chi) return 0.0;
    double s = age_offset + t;
    switch (family) {
      case Family::ConstantMarkov: return amplitude;
      case Family::PiecewiseIndicator:
        return profile == ProfileKind::ExpDecay ? amplitude * std::exp(-profile_decay * s)
                                                : amplitude;
      case Family::ContinuousBump: {
        double total = age_offset + chi;
        return 4.0 * amplitude * s * (total - s) / (total * total);
      }
      case Family::AgedInitial: break;  // never materialized; aged paths carry the base family
    }
    return 0.0;
  }
};

namespace detail {

inline InfectivityPath sample_path_impl(const InfectivityModel& m, Rng& rng) {
  InfectivityPath p;
  switch (m.family) {
    case Family::ConstantMarkov: {
      double eta = m.eta_law.sample(rng);
      p = {Family::ConstantMarkov, ProfileKind::Constant, m.amplitude, 0.0, 0.0, 0.0, eta, eta};
      return p;
    }
    case Family::PiecewiseIndicator: {
      double zeta = m.zeta_law.sample(rng);
      double eta = m.eta_law.sample(rng);
      p = {Family::PiecewiseIndicator, m.profile, m.amplitude, m.profile_decay,
           0.0,                        zeta,      eta,         zeta + eta};
      return p;
    }
    case Family::ContinuousBump: {
      double chi = m.chi_law.sample(rng);
      p = {Family::ContinuousBump, ProfileKind::Constant, m.amplitude, 0.0, 0.0, 0.0, chi, chi};
      return p;
    }
    case Family::AgedInitial: {
      for (std::size_t attempt = 0; attempt < m.max_age_attempts; ++attempt) {
        InfectivityPath b = sample_path_impl(*m.base, rng);
        double age = m.age_law.sample(rng);
        if (age >= b.chi) continue;
        bool exposed = age < b.zeta;
        if (m.role_tag == RoleTag::InitiallyExposed && !exposed) continue;
        if (m.role_tag == RoleTag::InitiallyInfectious && exposed) continue;
        InfectivityPath p0 = b;
        p0.age_offset = b.age_offset + age;
        p0.zeta = std::max(b.zeta - age, 0.0);
        p0.chi = b.chi - age;
        p0.eta = p0.chi - p0.zeta;
        return p0;
      }
      throw std::runtime_error("sample_path: aged-initial rejection failed (age law mass "
                               "incompatible with conditioning)");
    }
  }
  throw std::logic_error("sample_path: unknown family");
}

}  // namespace detail

inline InfectivityPath sample_path(const InfectivityModel& m, std::uint64_t seed) {
  Rng rng = engine_for(seed);
  return detail::sample_path_impl(m, rng);
}

inline double eval_path(const InfectivityPath& p, double t) { return p.eval(t); }

struct PathDurations {
  double zeta, eta, chi;
};

inline PathDurations path_durations(const InfectivityPath& p) { return {p.zeta, p.eta, p.chi}; }

// ---------------------------------------------------------------------------
// Deterministic functionals of the path law.
//
// Every built-in family reduces to expectations over the pair (zeta, chi)
// with a profile that is deterministic given the sampled durations, so the
// moments below are computed by closed forms (ConstantMarkov, exponential
// PiecewiseIndicator) or by Stieltjes sums against a discretized duration
// law.  Aged-initial models fall back to Monte Carlo with reported standard
// errors.
// ---------------------------------------------------------------------------

struct Estimate {
  double value = 0.0;
  double se = 0.0;  // zero for closed-form / deterministic-quadrature results
};

namespace detail {

// integral_{0}^{m} nu e^{-nu u} e^{-gamma (M - u)} du, for 0 <= m <= M;
// the probability P(zeta <= m, chi > M) for independent Exp(nu), Exp(gamma).
inline double exp_exp_joint(double nu, double gamma, double m, double M) {
  if (m <= 0.0) return 0.0;
  double d = nu - gamma;
  if (std::abs(d * m) < 1.0)
    return nu * std::exp(-gamma * M) * m * expm1_ratio(d * m);
  // both exponents are <= 0, so this form cannot overflow for nu < gamma
  return nu / d * (std::exp(-gamma * M) - std::exp(-gamma * (M - m) - nu * m));
}

struct ExpExpParams {
  double nu, gamma;
};

// Recognize models whose joint (zeta, chi) law is exponential/exponential
// with a constant profile (includes ConstantMarkov as nu = infinity).
inline std::optional<ExpExpParams> as_exp_exp(const InfectivityModel& m) {
  if (m.family == Family::ConstantMarkov) return ExpExpParams{-1.0, m.recovery_rate};
  if (m.family == Family::PiecewiseIndicator && m.profile == ProfileKind::Constant &&
      m.eta_law.kind == LawKind::Exponential) {
    if (m.zeta_law.has_atom_at_zero()) return ExpExpParams{-1.0, m.eta_law.p1};
    if (m.zeta_law.kind == LawKind::Exponential)
      return ExpExpParams{m.zeta_law.p1, m.eta_law.p1};
  }
  return std::nullopt;
}

// Weighted skeleton of one sampled path: everything the moment accumulators
// need to evaluate lambda and the compartment indicators at any age.
struct PathAtom {
  double w;
  double zeta, chi;
  double age_offset;
};

inline double atom_value(const InfectivityModel& m, const PathAtom& a, double t) {
  if (t < a.zeta || t >= a.chi) return 0.0;
  double s = a.age_offset + t;
  const InfectivityModel& b = m.family == Family::AgedInitial ? *m.base : m;
  switch (b.family) {
    case Family::ConstantMarkov: return b.amplitude;
    case Family::PiecewiseIndicator:
      return b.profile == ProfileKind::ExpDecay ? b.amplitude * std::exp(-b.profile_decay * s)
                                                : b.amplitude;
    case Family::ContinuousBump: {
      double total = a.age_offset + a.chi;
      return 4.0 * b.amplitude * s * (total - s) / (total * total);
    }
    default: return 0.0;
  }
}

// Deterministic atoms for PiecewiseIndicator (Stieltjes over zeta with the
// eta law kept analytic) are handled separately; these atoms are for the
// families where full path sampling is the fallback.
inline std::vector<PathAtom> mc_atoms(const InfectivityModel& m, std::size_t count,
                                      std::uint64_t seed) {
  std::vector<PathAtom> atoms;
  atoms.reserve(count);
  Rng rng = engine_for(seed, 0x5a5a);
  double w = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    InfectivityPath p = sample_path_impl(m, rng);
    atoms.push_back({w, p.zeta, p.chi, p.age_offset});
  }
  return atoms;
}

inline bool in_region(const PathAtom& a, Region r, double t) {
  switch (r) {
    case Region::Exposed: return a.zeta > t;
    case Region::Infectious: return a.zeta <= t && t < a.chi;
    case Region::Recovered: return a.chi <= t;
  }
  return false;
}

// True when every active path contributes a constant value on [zeta, chi).
inline bool constant_active_profile(const InfectivityModel& m) {
  const InfectivityModel& b = m.family == Family::AgedInitial ? *m.base : m;
  return b.family == Family::ConstantMarkov ||
         (b.family == Family::PiecewiseIndicator && b.profile == ProfileKind::Constant);
}

// Deterministic skeleton atoms for models with zeta = 0 a.s. or independent
// duration laws; Monte Carlo atoms otherwise.
inline std::vector<PathAtom> model_atoms(const InfectivityModel& m, std::size_t budget,
                                         std::uint64_t seed = 0xa6edu) {
  if (m.family == Family::AgedInitial) return mc_atoms(m, budget, seed);
  std::vector<PathAtom> atoms;
  if (m.family == Family::ContinuousBump) {
    auto d = DiscretizedLaw::from(m.chi_law);
    for (std::size_t k = 0; k < d.points.size(); ++k)
      atoms.push_back({d.weights[k], 0.0, d.points[k], 0.0});
    return atoms;
  }
  if (m.family == Family::ConstantMarkov || m.zeta_law.has_atom_at_zero()) {
    auto d = DiscretizedLaw::from(m.eta_law);
    for (std::size_t k = 0; k < d.points.size(); ++k)
      atoms.push_back({d.weights[k], 0.0, d.points[k], 0.0});
    return atoms;
  }
  std::size_t side = std::max<std::size_t>(64, static_cast<std::size_t>(std::sqrt(
                                                   static_cast<double>(budget))));
  auto dz = DiscretizedLaw::from(m.zeta_law, side);
  auto de = DiscretizedLaw::from(m.eta_law, side);
  for (std::size_t i = 0; i < dz.points.size(); ++i)
    for (std::size_t j = 0; j < de.points.size(); ++j)
      atoms.push_back(
          {dz.weights[i] * de.weights[j], dz.points[i], dz.points[i] + de.points[j], 0.0});
  return atoms;
}

}  // namespace detail

namespace detail {

// Scalar moments via closed forms where the family admits them.  Returns
// nullopt when the caller should fall back to quadrature / Monte Carlo.

inline std::optional<double> closed_mean(const InfectivityModel& m, double t) {
  if (auto ee = as_exp_exp(m)) {
    double beta = m.amplitude, g = ee->gamma;
    if (ee->nu < 0.0) return beta * std::exp(-g * t);
    double nu = ee->nu;
    // P(zeta <= t < chi)
    return beta * exp_exp_joint(nu, g, t, t);
  }
  return std::nullopt;
}

inline std::optional<double> closed_lambda_lambda(const InfectivityModel& m, double a, double b) {
  if (auto ee = as_exp_exp(m)) {
    double beta = m.amplitude, g = ee->gamma;
    double mn = std::min(a, b), mx = std::max(a, b);
    if (ee->nu < 0.0) return beta * beta * std::exp(-g * mx);
    return beta * beta * exp_exp_joint(ee->nu, g, mn, mx);
  }
  return std::nullopt;
}

inline std::optional<double> closed_lambda_region(const InfectivityModel& m, double a, double b,
                                                  Region r) {
  auto ee = as_exp_exp(m);
  if (!ee) return std::nullopt;
  double beta = m.amplitude, g = ee->gamma, nu = ee->nu;
  auto mean_at = [&](double t) { return *closed_mean(m, t); };
  switch (r) {
    case Region::Exposed:
      if (nu < 0.0) return 0.0;
      // P(b < zeta <= a, chi > a)
      if (b >= a) return 0.0;
      return beta * (exp_exp_joint(nu, g, a, a) - exp_exp_joint(nu, g, b, a));
    case Region::Infectious: {
      double mn = std::min(a, b), mx = std::max(a, b);
      if (nu < 0.0) return beta * std::exp(-g * mx);
      return beta * exp_exp_joint(nu, g, mn, mx);
    }
    case Region::Recovered:
      return mean_at(a) - *closed_lambda_region(m, a, b, Region::Exposed) -
             *closed_lambda_region(m, a, b, Region::Infectious);
  }
  return std::nullopt;
}

inline std::optional<double> closed_region_prob(const InfectivityModel& m, Region ra, double a,
                                                Region rb, double b) {
  auto ee = as_exp_exp(m);
  if (!ee) return std::nullopt;
  double g = ee->gamma, nu = ee->nu;
  auto marg = [&](Region r, double t) -> double {
    double gc = nu < 0.0 ? 0.0 : std::exp(-nu * t);                  // P(Exposed at t)
    double psi = nu < 0.0 ? std::exp(-g * t) : exp_exp_joint(nu, g, t, t);
    if (r == Region::Exposed) return gc;
    if (r == Region::Infectious) return psi;
    return 1.0 - gc - psi;
  };
  // Recovered entries close the partition; transpose handles (R, .) pairs.
  if (ra == Region::Recovered)
    return marg(rb, b) - *closed_region_prob(m, Region::Exposed, a, rb, b) -
           *closed_region_prob(m, Region::Infectious, a, rb, b);
  if (rb == Region::Recovered)
    return marg(ra, a) - *closed_region_prob(m, ra, a, Region::Exposed, b) -
           *closed_region_prob(m, ra, a, Region::Infectious, b);
  double mn = std::min(a, b), mx = std::max(a, b);
  if (ra == Region::Exposed && rb == Region::Exposed)
    return nu < 0.0 ? 0.0 : std::exp(-nu * mx);
  if (ra == Region::Infectious && rb == Region::Infectious)
    return nu < 0.0 ? std::exp(-g * mx) : exp_exp_joint(nu, g, mn, mx);
  if (ra == Region::Exposed && rb == Region::Infectious) {
    // zeta in (a, b], chi > b  (empty unless a < b)
    if (nu < 0.0 || a >= b) return 0.0;
    return exp_exp_joint(nu, g, b, b) - exp_exp_joint(nu, g, a, b);
  }
  // (Infectious, Exposed): transpose.
  return closed_region_prob(m, rb, b, ra, a);
}

// Generic scalar evaluation through Monte Carlo atoms (aged models) or
// discretized-law Stieltjes sums (piecewise/bump with non-exponential laws).
template <class F>
Estimate atom_estimate(const InfectivityModel& m, F&& f, std::size_t mc_samples) {
  if (m.family == Family::AgedInitial) {
    auto atoms = mc_atoms(m, mc_samples, 0xa6edu);
    RunningStats rs;
    for (const auto& a : atoms) rs.add(f(a));
    return {rs.mean, rs.se_of_mean()};
  }
  std::vector<PathAtom> atoms;
  if (m.family == Family::ContinuousBump) {
    auto d = DiscretizedLaw::from(m.chi_law);
    for (std::size_t k = 0; k < d.points.size(); ++k)
      atoms.push_back({d.weights[k], 0.0, d.points[k], 0.0});
  } else {  // PiecewiseIndicator: product measure over (zeta, eta)
    auto dz = DiscretizedLaw::from(m.zeta_law, 512);
    auto de = DiscretizedLaw::from(m.eta_law, 512);
    for (std::size_t i = 0; i < dz.points.size(); ++i)
      for (std::size_t j = 0; j < de.points.size(); ++j)
        atoms.push_back({dz.weights[i] * de.weights[j], dz.points[i],
                         dz.points[i] + de.points[j], 0.0});
  }
  CompensatedSum s;
  for (const auto& a : atoms) s.add(a.w * f(a));
  return {s.value(), 0.0};
}

}  // namespace detail

// E[lambda(t)]
inline Estimate mean_infectivity(const InfectivityModel& m, double t,
                                 std::size_t mc_samples = 1'000'000) {
  if (t < 0.0) throw std::invalid_argument("mean_infectivity: t must be >= 0");
  if (auto v = detail::closed_mean(m, t)) return {*v, 0.0};
  return detail::atom_estimate(
      m, [&](const detail::PathAtom& a) { return detail::atom_value(m, a, t); }, mc_samples);
}

// E[lambda(t) 1{region at age t2}]
inline Estimate joint_indicator_moment(const InfectivityModel& m, double t, double t2, Region r,
                                       std::size_t mc_samples = 1'000'000) {
  if (t < 0.0 || t2 < 0.0) throw std::invalid_argument("joint_indicator_moment: t, t2 >= 0");
  if (auto v = detail::closed_lambda_region(m, t, t2, r)) return {*v, 0.0};
  return detail::atom_estimate(
      m,
      [&](const detail::PathAtom& a) {
        return detail::in_region(a, r, t2) ? detail::atom_value(m, a, t) : 0.0;
      },
      mc_samples);
}

// Cov(lambda(t), lambda(t2))
inline Estimate cov_infectivity(const InfectivityModel& m, double t, double t2,
                                std::size_t mc_samples = 1'000'000) {
  if (t < 0.0 || t2 < 0.0) throw std::invalid_argument("cov_infectivity: t, t2 >= 0");
  if (auto v = detail::closed_lambda_lambda(m, t, t2)) {
    double mu1 = *detail::closed_mean(m, t), mu2 = *detail::closed_mean(m, t2);
    return {*v - mu1 * mu2, 0.0};
  }
  if (m.family != Family::AgedInitial) {
    double second =
        detail::atom_estimate(
            m,
            [&](const detail::PathAtom& a) {
              return detail::atom_value(m, a, t) * detail::atom_value(m, a, t2);
            },
            mc_samples)
            .value;
    double mu1 = mean_infectivity(m, t).value, mu2 = mean_infectivity(m, t2).value;
    return {second - mu1 * mu2, 0.0};
  }
  // Aged: single MC pass over shared atoms so the SE reflects the covariance.
  auto atoms = detail::mc_atoms(m, mc_samples, 0xa6edu);
  RunningStats v1, v2, v12;
  for (const auto& a : atoms) {
    double x = detail::atom_value(m, a, t), y = detail::atom_value(m, a, t2);
    v1.add(x);
    v2.add(y);
    v12.add(x * y);
  }
  double cov = v12.mean - v1.mean * v2.mean;
  return {cov, v12.se_of_mean() + std::abs(v1.mean) * v2.se_of_mean() +
                   std::abs(v2.mean) * v1.se_of_mean()};
}

// P(region at t)
inline Estimate region_probability(const InfectivityModel& m, Region r, double t,
                                   std::size_t mc_samples = 1'000'000) {
  if (auto v = detail::closed_region_prob(m, r, t, r, t)) {
    // closed_region_prob(r,t,r,t) equals the marginal for all three regions
    return {*v, 0.0};
  }
  return detail::atom_estimate(
      m, [&](const detail::PathAtom& a) { return detail::in_region(a, r, t) ? 1.0 : 0.0; },
      mc_samples);
}

// ---------------------------------------------------------------------------
// Sojourn tables: grid-sampled CDFs of the exposed/infectious structure for
// the newly-infected law (G, Phi, Psi), the initially-exposed law (G0, Phi0,
// Psi0), the initially-infectious remaining-period CDF F0I, and the
// conditional infectious-period CDF F(v|u) on grid x grid.
// ---------------------------------------------------------------------------

struct SojournTable {
  Grid grid;
  std::vector<double> G, Phi, Psi;
  std::vector<double> G0, Phi0, Psi0;
  std::vector<double> F0I;
  // F(v|u): one row when exposed/infectious periods are independent, a row
  // per grid u otherwise.
  std::vector<std::vector<double>> fcond_rows;
  double mc_se = 0.0;

  double fcond(std::size_t u, std::size_t v) const {
    return fcond_rows.size() == 1 ? fcond_rows[0][v] : fcond_rows[u][v];
  }
};

namespace detail {

struct SojournColumns {
  std::vector<double> G, Phi, Psi;
  double se = 0.0;
};

inline SojournColumns sojourn_columns(const InfectivityModel& m, const Grid& grid,
                                      std::size_t mc_samples) {
  const std::size_t n = grid.nodes;
  SojournColumns c;
  c.G.resize(n);
  c.Phi.resize(n);
  c.Psi.resize(n);
  if (m.family == Family::AgedInitial) {
    auto atoms = mc_atoms(m, mc_samples, 0x50f0u);
    std::vector<double> g(n, 0.0), phi(n, 0.0);
    for (const auto& a : atoms) {
      auto iz = static_cast<std::size_t>(std::ceil(a.zeta / grid.step - 1e-12));
      auto ic = static_cast<std::size_t>(std::ceil(a.chi / grid.step - 1e-12));
      if (iz < n) g[iz] += a.w;
      if (ic < n) phi[ic] += a.w;
    }
    double cg = 0.0, cp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cg += g[i];
      cp += phi[i];
      c.G[i] = cg;
      c.Phi[i] = cp;
      c.Psi[i] = cg - cp;
    }
    c.se = 0.5 / std::sqrt(static_cast<double>(mc_samples));
    return c;
  }
  if (auto ee = as_exp_exp(m)) {
    for (std::size_t i = 0; i < n; ++i) {
      double t = grid.time(i);
      if (ee->nu < 0.0) {
        c.G[i] = 1.0;
        c.Psi[i] = std::exp(-ee->gamma * t);
      } else {
        c.G[i] = -std::expm1(-ee->nu * t);
        c.Psi[i] = exp_exp_joint(ee->nu, ee->gamma, t, t);
      }
      c.Phi[i] = c.G[i] - c.Psi[i];
    }
    return c;
  }
  if (m.family == Family::ContinuousBump) {
    for (std::size_t i = 0; i < n; ++i) {
      double t = grid.time(i);
      c.G[i] = 1.0;
      c.Phi[i] = m.chi_law.cdf(t);
      c.Psi[i] = 1.0 - c.Phi[i];
    }
    return c;
  }
  // PiecewiseIndicator with general independent laws: Phi by Stieltjes.
  auto dz = DiscretizedLaw::from(m.zeta_law);
  for (std::size_t i = 0; i < n; ++i) {
    double t = grid.time(i);
    c.G[i] = m.zeta_law.cdf(t);
    CompensatedSum phi;
    for (std::size_t k = 0; k < dz.points.size() && dz.points[k] <= t; ++k)
      phi.add(dz.weights[k] * m.eta_law.cdf(t - dz.points[k]));
    c.Phi[i] = std::min(phi.value(), c.G[i]);
    c.Psi[i] = c.G[i] - c.Phi[i];
  }
  return c;
}

}  // namespace detail

inline SojournTable compute_sojourn_table(const InfectivityModel& model,
                                          const InfectivityModel& model0,
                                          const InfectivityModel& model0I, const Grid& grid,
                                          std::size_t mc_samples = 1'000'000) {
  SojournTable t;
  t.grid = grid;
  const std::size_t n = grid.nodes;
  auto c = detail::sojourn_columns(model, grid, mc_samples);
  t.G = std::move(c.G);
  t.Phi = std::move(c.Phi);
  t.Psi = std::move(c.Psi);
  auto c0 = detail::sojourn_columns(model0, grid, mc_samples);
  t.G0 = std::move(c0.G);
  t.Phi0 = std::move(c0.Phi);
  t.Psi0 = std::move(c0.Psi);
  auto cI = detail::sojourn_columns(model0I, grid, mc_samples);
  t.F0I = std::move(cI.Phi);  // zeta = 0 a.s., so the chi CDF is the eta CDF
  t.mc_se = std::max({c.se, c0.se, cI.se});

  // Conditional infectious-period CDF for the newly-infected law.
  if (model.family == Family::AgedInitial) {
    auto atoms = detail::mc_atoms(model, mc_samples / 10, 0xfc0du);
    std::vector<std::vector<double>> buckets(n);
    for (const auto& a : atoms) {
      auto iu = static_cast<std::size_t>(std::min<double>(
          std::floor(a.zeta / grid.step), static_cast<double>(n - 1)));
      buckets[iu].push_back(a.chi - a.zeta);
    }
    std::vector<double> fallback;  // pooled law where a row has no mass
    for (auto& r : buckets) fallback.insert(fallback.end(), r.begin(), r.end());
    std::sort(fallback.begin(), fallback.end());
    t.fcond_rows.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t u = 0; u < n; ++u) {
      auto& r = buckets[u];
      std::sort(r.begin(), r.end());
      const auto& src = r.empty() ? fallback : r;
      for (std::size_t v = 0; v < n; ++v) {
        auto it = std::upper_bound(src.begin(), src.end(), grid.time(v));
        t.fcond_rows[u][v] =
            static_cast<double>(it - src.begin()) / static_cast<double>(src.size());
      }
    }
  } else {
    // Independent exposed/infectious periods: F(v|u) = F(v).
    const DurationLaw& eta = model.family == Family::ContinuousBump ? model.chi_law : model.eta_law;
    t.fcond_rows.assign(1, std::vector<double>(n, 0.0));
    for (std::size_t v = 0; v < n; ++v) t.fcond_rows[0][v] = eta.cdf(grid.time(v));
  }
  return t;
}

// Mean infectivity tabulated on a grid (the FLLN kernel).
inline std::vector<double> mean_infectivity_grid(const InfectivityModel& m, const Grid& grid,
                                                 std::size_t mc_samples = 100'000) {
  const std::size_t n = grid.nodes;
  std::vector<double> out(n);
  if (auto ee = detail::as_exp_exp(m)) {
    for (std::size_t i = 0; i < n; ++i) {
      double tt = grid.time(i);
      out[i] = ee->nu < 0.0 ? m.amplitude * std::exp(-ee->gamma * tt)
                            : m.amplitude * detail::exp_exp_joint(ee->nu, ee->gamma, tt, tt);
    }
    return out;
  }
  if (m.family == Family::PiecewiseIndicator) {
    // Deterministic profile factors out: E[lambda(t)] = profile(t) * Psi(t).
    auto c = detail::sojourn_columns(m, grid, mc_samples);
    for (std::size_t i = 0; i < n; ++i) {
      double prof = m.profile == ProfileKind::ExpDecay
                        ? m.amplitude * std::exp(-m.profile_decay * grid.time(i))
                        : m.amplitude;
      out[i] = prof * c.Psi[i];
    }
    return out;
  }
  if (m.family == Family::ContinuousBump) {
    auto d = DiscretizedLaw::from(m.chi_law);
    for (std::size_t i = 0; i < n; ++i) {
      double tt = grid.time(i);
      CompensatedSum s;
      for (std::size_t k = 0; k < d.points.size(); ++k) {
        double x = d.points[k];
        if (x > tt) s.add(d.weights[k] * 4.0 * m.amplitude * tt * (x - tt) / (x * x));
      }
      out[i] = s.value();
    }
    return out;
  }
  auto atoms = detail::mc_atoms(m, mc_samples, 0xa6edu);
  for (std::size_t i = 0; i < n; ++i) {
    CompensatedSum s;
    double tt = grid.time(i);
    for (const auto& a : atoms) s.add(a.w * detail::atom_value(m, a, tt));
    out[i] = s.value();
  }
  return out;
}

}  // namespace varinf
