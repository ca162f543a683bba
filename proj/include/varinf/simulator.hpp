#pragma once

#include <limits>
#include <queue>
#include <vector>

#include "varinf/common.hpp"
#include "varinf/infectivity.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// Exact event-driven simulation of the N-individual epidemic.
//
// Infections are generated by thinning: between structural events the
// instantaneous rate Upsilon(t) = (S/N) * FoI(t) is dominated by
// B = (S/N) * lambda_star * (#agents with infection age < chi), which is
// constant on each inter-event interval, so candidates drawn from an
// exponential clock at rate B and accepted with probability Upsilon/B give
// a distributionally exact sample.
// ---------------------------------------------------------------------------

enum class Variant { SIR, SEIR, SIS, SIRS };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::SIR: return "SIR";
    case Variant::SEIR: return "SEIR";
    case Variant::SIS: return "SIS";
    case Variant::SIRS: return "SIRS";
  }
  return "?";
}

struct Scenario {
  Variant variant = Variant::SEIR;
  std::int64_t population = 1000;
  double horizon = 20.0;
  double output_step = 0.01;
  double e0_frac = 0.0;
  double i0_frac = 0.01;
  double r0_frac = 0.0;
  InfectivityModel model;
  InfectivityModel model0;   // initially exposed (SEIR)
  InfectivityModel model0I;  // initially infectious
  // SIRS only: immune-period law for new recoveries and the remaining-immune
  // law of initially immune individuals.
  DurationLaw immune_law = DurationLaw::exponential(1.0);
  DurationLaw immune0_law = DurationLaw::exponential(1.0);
  std::uint64_t seed = 1;
  int replications = 1;
  bool binomial_init = false;

  void validate() const {
    if (population < 1) throw std::invalid_argument("scenario: N must be >= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("scenario: T must be > 0");
    if (!(output_step > 0.0)) throw std::invalid_argument("scenario: delta must be > 0");
    if (e0_frac < 0.0 || i0_frac < 0.0 || r0_frac < 0.0)
      throw std::invalid_argument("scenario: initial fractions must be >= 0");
    if (!(e0_frac + i0_frac + r0_frac < 1.0))
      throw std::invalid_argument("scenario: e0_frac + i0_frac + r0_frac must be < 1");
    if (replications < 1) throw std::invalid_argument("scenario: replications must be >= 1");
    if (variant != Variant::SEIR && e0_frac != 0.0)
      throw std::invalid_argument("scenario: e0_frac must be 0 unless variant is SEIR");
    if (variant == Variant::SIS && r0_frac != 0.0)
      throw std::invalid_argument("scenario: r0_frac must be 0 for SIS (no removed state)");
    if (variant != Variant::SEIR && !model.zeta_is_zero())
      throw std::invalid_argument(
          "scenario: SIR/SIS/SIRS require an infectious-from-infection model (zeta = 0)");
    if (i0_frac > 0.0 && !model0I.zeta_is_zero())
      throw std::invalid_argument("scenario: model0I must have zeta = 0");
    if (variant == Variant::SEIR && e0_frac > 0.0 && model0.zeta_is_zero())
      throw std::invalid_argument("scenario: model0 must have a positive exposed period");
  }

  Grid output_grid() const { return Grid::over(horizon, output_step); }

  std::int64_t initial_exposed() const {
    return std::llround(static_cast<double>(population) * e0_frac);
  }
  std::int64_t initial_infectious() const {
    return std::llround(static_cast<double>(population) * i0_frac);
  }
  std::int64_t initial_removed() const {
    return std::llround(static_cast<double>(population) * r0_frac);
  }
};

struct InfectionRecord {
  double time;
  double zeta;  // exposed period (SEIR), 0 (SIR/SIS), infectious period (SIRS)
  double eta;   // infectious period (SIR/SEIR/SIS), immune period (SIRS)
  std::int64_t agent;
};

// Initial individuals, with the two scheduled sojourns of their variant.
struct InitialRecord {
  enum Kind : std::uint8_t { Exposed, Infectious, Immune } kind;
  double d1;  // exposed (SEIR) / infectious (SIRS) / remaining immune
  double d2;  // infectious / immune
};

struct SimulationTrajectory {
  Grid grid;
  std::vector<InfectionRecord> events;
  std::vector<InitialRecord> initials;
  std::vector<std::int64_t> S, E, I, R;
  std::vector<double> foi;      // aggregate force of infection on the grid
  std::vector<double> upsilon;  // (S/N) * foi
};

namespace detail {

struct AgentPath {
  double tau;
  InfectivityPath path;
};

}  // namespace detail

// Compartment counts on the grid from the event log and initial records, by
// the indicator sums of the model: right-continuous, integer-exact.
inline void count_processes(const std::vector<InfectionRecord>& events,
                            const std::vector<InitialRecord>& initials, Variant variant,
                            std::int64_t population, const Grid& grid,
                            std::vector<std::int64_t>& S, std::vector<std::int64_t>& E,
                            std::vector<std::int64_t>& I, std::vector<std::int64_t>& R) {
  const std::size_t n = grid.nodes;
  std::vector<std::int64_t> dS(n, 0), dE(n, 0), dI(n, 0), dR(n, 0);
  auto move = [&](std::vector<std::int64_t>& from, std::vector<std::int64_t>& to, double u) {
    std::size_t k = node_at_or_after(u, grid);
    if (k >= n) return;
    from[k] -= 1;
    to[k] += 1;
  };

  std::int64_t e0 = 0, i0 = 0, r0 = 0;
  for (const auto& a : initials) {
    switch (a.kind) {
      case InitialRecord::Exposed:
        ++e0;
        move(dE, dI, a.d1);
        move(dI, dR, a.d1 + a.d2);
        break;
      case InitialRecord::Infectious:
        ++i0;
        if (variant == Variant::SIS) {
          move(dI, dS, a.d1);
        } else if (variant == Variant::SIRS) {
          move(dI, dR, a.d1);
          move(dR, dS, a.d1 + a.d2);
        } else {
          move(dI, dR, a.d1);
        }
        break;
      case InitialRecord::Immune:
        ++r0;
        move(dR, dS, a.d1);
        break;
    }
  }
  for (const auto& ev : events) {
    move(dS, variant == Variant::SEIR ? dE : dI, ev.time);
    switch (variant) {
      case Variant::SEIR:
        move(dE, dI, ev.time + ev.zeta);
        move(dI, dR, ev.time + ev.zeta + ev.eta);
        break;
      case Variant::SIR: move(dI, dR, ev.time + ev.zeta + ev.eta); break;
      case Variant::SIS: move(dI, dS, ev.time + ev.eta); break;
      case Variant::SIRS:
        move(dI, dR, ev.time + ev.zeta);
        move(dR, dS, ev.time + ev.zeta + ev.eta);
        break;
    }
  }

  S.assign(n, 0);
  E.assign(n, 0);
  I.assign(n, 0);
  R.assign(n, 0);
  std::int64_t s = population - e0 - i0 - r0, e = e0, i = i0, r = r0;
  for (std::size_t k = 0; k < n; ++k) {
    s += dS[k];
    e += dE[k];
    i += dI[k];
    r += dR[k];
    S[k] = s;
    E[k] = e;
    I[k] = i;
    R[k] = r;
  }
}

// Aggregate infectivity at time t: exact sum of eval over agents whose
// support can still be positive.
inline double aggregate_infectivity(const std::vector<detail::AgentPath>& agents, double t) {
  CompensatedSum s;
  for (const auto& a : agents)
    if (t >= a.tau && t < a.tau + a.path.chi) s.add(a.path.eval(t - a.tau));
  return s.value();
}

inline SimulationTrajectory simulate_epidemic(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  const Grid grid = sc.output_grid();
  const double T = grid.horizon();
  const auto N = sc.population;
  const double invN = 1.0 / static_cast<double>(N);

  Rng init_rng = engine_for(seed, 1);
  Rng thin_rng = engine_for(seed, 2);
  Rng path_rng = engine_for(seed, 3);
  Rng extra_rng = engine_for(seed, 4);  // SIRS immune draws

  SimulationTrajectory out;
  out.grid = grid;

  // --- event queue -----------------------------------------------------
  enum class EvKind : std::uint8_t { FoiStart, SupportEnd, ReturnToS };
  struct Ev {
    double time;
    std::uint64_t order;
    EvKind kind;
    double amount;
  };
  struct EvCmp {
    bool operator()(const Ev& a, const Ev& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };
  std::priority_queue<Ev, std::vector<Ev>, EvCmp> queue;
  std::uint64_t order = 0;

  const bool incremental = detail::constant_active_profile(sc.model) &&
                           (sc.e0_frac == 0.0 || detail::constant_active_profile(sc.model0)) &&
                           (sc.i0_frac == 0.0 || detail::constant_active_profile(sc.model0I));

  std::vector<detail::AgentPath> agents;  // all infectivity carriers, ever
  std::int64_t susceptible = 0;
  std::int64_t active = 0;     // agents with infection age < chi
  double foi_sum = 0.0;        // maintained only in incremental mode
  const double lam_star =
      std::max({sc.model.lambda_star, sc.model0.lambda_star, sc.model0I.lambda_star});

  auto admit = [&](double tau, const InfectivityPath& p) {
    agents.push_back({tau, p});
    ++active;
    queue.push({tau + p.chi, order++, EvKind::SupportEnd, incremental ? p.eval(p.zeta) : 0.0});
    if (incremental) {
      double amp = p.eval(p.zeta);
      if (p.zeta > 0.0)
        queue.push({tau + p.zeta, order++, EvKind::FoiStart, amp});
      else
        foi_sum += amp;
    }
  };

  // --- initial condition ------------------------------------------------
  std::int64_t e0, i0, r0;
  if (sc.binomial_init) {
    e0 = i0 = r0 = 0;
    for (std::int64_t k = 0; k < N; ++k) {
      double u = uniform01(init_rng);
      if (u < sc.e0_frac)
        ++e0;
      else if (u < sc.e0_frac + sc.i0_frac)
        ++i0;
      else if (u < sc.e0_frac + sc.i0_frac + sc.r0_frac)
        ++r0;
    }
  } else {
    e0 = sc.initial_exposed();
    i0 = sc.initial_infectious();
    r0 = sc.initial_removed();
  }
  susceptible = N - e0 - i0 - r0;

  for (std::int64_t k = 0; k < e0; ++k) {
    InfectivityPath p = detail::sample_path_impl(sc.model0, init_rng);
    out.initials.push_back({InitialRecord::Exposed, p.zeta, p.eta});
    admit(0.0, p);
  }
  for (std::int64_t k = 0; k < i0; ++k) {
    InfectivityPath p = detail::sample_path_impl(sc.model0I, init_rng);
    if (sc.variant == Variant::SIRS) {
      double imm = sc.immune_law.sample(extra_rng);
      out.initials.push_back({InitialRecord::Infectious, p.chi, imm});
    } else {
      out.initials.push_back({InitialRecord::Infectious, p.chi, 0.0});
    }
    admit(0.0, p);
    // SIS returns to S at the support end, handled by SupportEnd itself.
    if (sc.variant == Variant::SIRS)
      queue.push({p.chi + out.initials.back().d2, order++, EvKind::ReturnToS, 0.0});
  }
  for (std::int64_t k = 0; k < r0; ++k) {
    if (sc.variant == Variant::SIRS) {
      double imm = sc.immune0_law.sample(extra_rng);
      out.initials.push_back({InitialRecord::Immune, imm, 0.0});
      queue.push({imm, order++, EvKind::ReturnToS, 0.0});
    } else {
      out.initials.push_back({InitialRecord::Immune,
                              std::numeric_limits<double>::infinity(), 0.0});
    }
  }

  // --- infection mechanics ----------------------------------------------
  const std::size_t event_cap = static_cast<std::size_t>(100) * static_cast<std::size_t>(N);

  auto infect = [&](double tc) {
    InfectivityPath p = detail::sample_path_impl(sc.model, path_rng);
    std::int64_t id = static_cast<std::int64_t>(out.initials.size() + out.events.size());
    switch (sc.variant) {
      case Variant::SEIR:
      case Variant::SIR:
      case Variant::SIS: out.events.push_back({tc, p.zeta, p.eta, id}); break;
      case Variant::SIRS: {
        double imm = sc.immune_law.sample(extra_rng);
        out.events.push_back({tc, p.chi, imm, id});
        queue.push({tc + p.chi + imm, order++, EvKind::ReturnToS, 0.0});
        break;
      }
    }
    if (out.events.size() > event_cap)
      throw std::runtime_error("simulate_epidemic: event cap exceeded (runaway configuration)");
    --susceptible;
    admit(tc, p);
  };

  auto foi_at = [&](double t) {
    if (incremental) return std::max(foi_sum, 0.0);
    return aggregate_infectivity(agents, t);
  };

  // --- main loop ----------------------------------------------------------
  double t = 0.0;
  while (t < T) {
    double t_struct = queue.empty() ? std::numeric_limits<double>::infinity() : queue.top().time;
    double seg_end = std::min(t_struct, T);

    // Thinning on [t, seg_end): B is a valid bound on Upsilon here.  Each
    // accepted infection schedules events that may precede seg_end, so the
    // segment is restarted after every acceptance.
    double bound = static_cast<double>(susceptible) * invN * lam_star *
                   static_cast<double>(active);
    bool infected = false;
    while (t < seg_end) {
      if (bound <= 0.0) {
        t = seg_end;
        break;
      }
      double tc = t + draw_exponential(thin_rng, bound);
      if (tc >= seg_end) {
        t = seg_end;
        break;
      }
      double ups = static_cast<double>(susceptible) * invN * foi_at(tc);
      double u = uniform01(thin_rng);
      t = tc;
      if (u * bound <= ups) {
        infect(tc);
        infected = true;
        break;
      }
    }
    if (infected) continue;
    if (t >= T) break;

    // Apply all structural events at this time point.
    while (!queue.empty() && queue.top().time <= t) {
      Ev ev = queue.top();
      queue.pop();
      switch (ev.kind) {
        case EvKind::FoiStart: foi_sum += ev.amount; break;
        case EvKind::SupportEnd:
          --active;
          if (incremental) foi_sum -= ev.amount;
          if (sc.variant == Variant::SIS) ++susceptible;
          break;
        case EvKind::ReturnToS:
          if (sc.variant != Variant::SIS) ++susceptible;
          break;
      }
    }
  }

  // --- grid outputs -------------------------------------------------------
  count_processes(out.events, out.initials, sc.variant, N, grid, out.S, out.E, out.I, out.R);
  out.foi.assign(grid.nodes, 0.0);
  for (const auto& a : agents) {
    std::size_t k0 = node_at_or_after(a.tau + a.path.zeta, grid);
    for (std::size_t k = k0; k < grid.nodes; ++k) {
      double age = grid.time(k) - a.tau;
      if (age >= a.path.chi) break;
      out.foi[k] += a.path.eval(age);
    }
  }
  out.upsilon.resize(grid.nodes);
  for (std::size_t k = 0; k < grid.nodes; ++k)
    out.upsilon[k] =
        static_cast<double>(out.S[k]) / static_cast<double>(N) * out.foi[k];
  return out;
}

}  // namespace varinf
