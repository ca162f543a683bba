#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "varinf/simulator.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// INI-style scenario configuration.
//
//   [scenario]  variant, N, e0_frac, i0_frac, r0_frac, seed, replications,
//               init (deterministic|binomial), immune_* (SIRS)
//   [grid]      T, delta
//   [model]     family + family-specific keys (see parse_model)
//   [model0]    initially-exposed law (defaults to [model], re-tagged)
//   [model0I]   initially-infectious law
//   [experiment] ns, reps, times, paths, kernel_delta
//
// Unknown keys are rejected with their line number.  Duration laws are given
// as <prefix>_dist = exponential|gamma|lognormal|uniform|point with
// parameters <prefix>_p1 / <prefix>_p2 (rate; shape,rate; mu,sigma; lo,hi;
// value).
// ---------------------------------------------------------------------------

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigDocument {
  struct Entry {
    std::string value;
    int line = 0;
    mutable bool used = false;
  };
  std::map<std::string, std::map<std::string, Entry>> sections;

  bool has(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    return s != sections.end() && s->second.count(key) > 0;
  }
  const Entry* find(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }
  void reject_unused() const {
    for (const auto& [sec, entries] : sections)
      for (const auto& [key, e] : entries)
        if (!e.used)
          throw ConfigError("config: unknown key '" + key + "' in [" + sec + "] (line " +
                            std::to_string(e.line) + ")");
  }
};

inline ConfigDocument parse_config_document(const std::string& text) {
  ConfigDocument doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section header (line " + std::to_string(lineno) +
                          ")");
      section = trim(line.substr(1, line.size() - 2));
      doc.sections[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ConfigError("config: expected key = value (line " + std::to_string(lineno) + ")");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: empty key or value (line " + std::to_string(lineno) + ")");
    if (doc.sections[section].count(key))
      throw ConfigError("config: duplicate key '" + key + "' (line " + std::to_string(lineno) +
                        ")");
    doc.sections[section][key] = {value, lineno, false};
  }
  return doc;
}

namespace detail {

inline double to_real(const ConfigDocument::Entry& e, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: '" + key + "' is not a number (line " + std::to_string(e.line) +
                      ")");
  }
}

inline double get_real(const ConfigDocument& doc, const std::string& sec, const std::string& key,
                       double fallback) {
  const auto* e = doc.find(sec, key);
  return e ? to_real(*e, key) : fallback;
}

inline double require_real(const ConfigDocument& doc, const std::string& sec,
                           const std::string& key) {
  const auto* e = doc.find(sec, key);
  if (!e) throw ConfigError("config: missing key '" + key + "' in [" + sec + "]");
  return to_real(*e, key);
}

inline std::string get_string(const ConfigDocument& doc, const std::string& sec,
                              const std::string& key, const std::string& fallback) {
  const auto* e = doc.find(sec, key);
  return e ? e->value : fallback;
}

inline DurationLaw parse_law(const ConfigDocument& doc, const std::string& sec,
                             const std::string& prefix, const DurationLaw* fallback = nullptr) {
  std::string kind = get_string(doc, sec, prefix + "_dist", "");
  if (kind.empty()) {
    if (fallback) return *fallback;
    throw ConfigError("config: missing '" + prefix + "_dist' in [" + sec + "]");
  }
  double p1 = require_real(doc, sec, prefix + "_p1");
  if (kind == "exponential") return DurationLaw::exponential(p1);
  if (kind == "point") return DurationLaw::point(p1);
  double p2 = require_real(doc, sec, prefix + "_p2");
  if (kind == "gamma") return DurationLaw::gamma(p1, p2);
  if (kind == "lognormal") return DurationLaw::log_normal(p1, p2);
  if (kind == "uniform") return DurationLaw::uniform(p1, p2);
  throw ConfigError("config: unknown law '" + kind + "' for '" + prefix + "' in [" + sec + "]");
}

inline InfectivityModel parse_model(const ConfigDocument& doc, const std::string& sec,
                                    RoleTag role, const InfectivityModel* base_model) {
  std::string family = get_string(doc, sec, "family", "");
  if (family.empty()) throw ConfigError("config: missing 'family' in [" + sec + "]");
  if (family == "constant_markov") {
    return InfectivityModel::constant_markov(require_real(doc, sec, "beta"),
                                             require_real(doc, sec, "gamma"), role);
  }
  if (family == "piecewise_indicator") {
    std::string prof = get_string(doc, sec, "profile", "constant");
    ProfileKind pk = prof == "exp_decay" ? ProfileKind::ExpDecay : ProfileKind::Constant;
    if (prof != "constant" && prof != "exp_decay")
      throw ConfigError("config: unknown profile '" + prof + "' in [" + sec + "]");
    double decay = pk == ProfileKind::ExpDecay ? require_real(doc, sec, "profile_decay") : 0.0;
    return InfectivityModel::piecewise_indicator(require_real(doc, sec, "beta"),
                                                 parse_law(doc, sec, "zeta"),
                                                 parse_law(doc, sec, "eta"), role, pk, decay);
  }
  if (family == "continuous_bump") {
    return InfectivityModel::continuous_bump(require_real(doc, sec, "peak"),
                                             parse_law(doc, sec, "chi"), role);
  }
  if (family == "aged_initial") {
    if (!base_model)
      throw ConfigError("config: aged_initial requires a [model] section in [" + sec + "]");
    std::string cond = get_string(doc, sec, "conditioning", "");
    RoleTag tag;
    if (cond == "exposed")
      tag = RoleTag::InitiallyExposed;
    else if (cond == "infectious")
      tag = RoleTag::InitiallyInfectious;
    else
      throw ConfigError("config: aged_initial conditioning must be exposed|infectious in [" +
                        sec + "]");
    auto attempts =
        static_cast<std::size_t>(get_real(doc, sec, "max_attempts", 10'000.0));
    return make_aged_initial_model(*base_model, parse_law(doc, sec, "age"), tag, attempts);
  }
  throw ConfigError("config: unknown family '" + family + "' in [" + sec + "]");
}

}  // namespace detail

struct ExperimentConfig {
  std::vector<std::int64_t> ns = {1000, 4000, 16000};
  int reps = 30;
  std::vector<double> times = {2.0, 5.0, 10.0};
  std::size_t paths = 200;
  double kernel_delta = 0.05;
  std::size_t prm_draws = 100'000;
};

struct ParsedConfig {
  Scenario scenario;
  ExperimentConfig experiment;
};

inline ParsedConfig build_config(const ConfigDocument& doc) {
  ParsedConfig out;
  Scenario& sc = out.scenario;

  std::string variant = detail::get_string(doc, "scenario", "variant", "SEIR");
  if (variant == "SIR")
    sc.variant = Variant::SIR;
  else if (variant == "SEIR")
    sc.variant = Variant::SEIR;
  else if (variant == "SIS")
    sc.variant = Variant::SIS;
  else if (variant == "SIRS")
    sc.variant = Variant::SIRS;
  else
    throw ConfigError("config: unknown variant '" + variant + "'");

  sc.population = static_cast<std::int64_t>(detail::get_real(doc, "scenario", "N", 1000.0));
  sc.e0_frac = detail::get_real(doc, "scenario", "e0_frac", 0.0);
  sc.i0_frac = detail::get_real(doc, "scenario", "i0_frac", 0.01);
  sc.r0_frac = detail::get_real(doc, "scenario", "r0_frac", 0.0);
  sc.seed = static_cast<std::uint64_t>(detail::get_real(doc, "scenario", "seed", 1.0));
  sc.replications =
      static_cast<int>(detail::get_real(doc, "scenario", "replications", 1.0));
  std::string init = detail::get_string(doc, "scenario", "init", "deterministic");
  if (init == "binomial")
    sc.binomial_init = true;
  else if (init != "deterministic")
    throw ConfigError("config: init must be deterministic|binomial");

  sc.horizon = detail::get_real(doc, "grid", "T", 20.0);
  sc.output_step = detail::get_real(doc, "grid", "delta", 0.01);

  sc.model = detail::parse_model(doc, "model", RoleTag::NewlyInfected, nullptr);
  if (doc.sections.count("model0"))
    sc.model0 = detail::parse_model(doc, "model0", RoleTag::InitiallyExposed, &sc.model);
  else if (sc.e0_frac > 0.0) {
    // fresh initially-exposed law: same family as the newly infected
    sc.model0 = sc.model;
    sc.model0.role_tag = RoleTag::InitiallyExposed;
  }
  if (doc.sections.count("model0I"))
    sc.model0I = detail::parse_model(doc, "model0I", RoleTag::InitiallyInfectious, &sc.model);
  else if (sc.i0_frac > 0.0) {
    if (!sc.model.zeta_is_zero())
      throw ConfigError(
          "config: [model0I] is required when i0_frac > 0 and the model has a latent period");
    sc.model0I = sc.model;
    sc.model0I.role_tag = RoleTag::InitiallyInfectious;
  }

  if (sc.variant == Variant::SIRS) {
    sc.immune_law = detail::parse_law(doc, "scenario", "immune");
    DurationLaw fb = sc.immune_law;
    sc.immune0_law = detail::parse_law(doc, "scenario", "immune0", &fb);
  }

  ExperimentConfig& ex = out.experiment;
  if (doc.sections.count("experiment")) {
    auto parse_list = [&](const std::string& key, auto& vec) {
      const auto* e = doc.find("experiment", key);
      if (!e) return;
      vec.clear();
      std::istringstream ss(e->value);
      std::string tok;
      while (std::getline(ss, tok, ','))
        vec.push_back(static_cast<typename std::decay_t<decltype(vec)>::value_type>(
            std::stod(tok)));
    };
    parse_list("ns", ex.ns);
    parse_list("times", ex.times);
    ex.reps = static_cast<int>(detail::get_real(doc, "experiment", "reps", ex.reps));
    ex.paths =
        static_cast<std::size_t>(detail::get_real(doc, "experiment", "paths", ex.paths));
    ex.kernel_delta = detail::get_real(doc, "experiment", "kernel_delta", ex.kernel_delta);
    ex.prm_draws = static_cast<std::size_t>(
        detail::get_real(doc, "experiment", "draws", ex.prm_draws));
  }

  doc.reject_unused();
  sc.validate();
  return out;
}

inline ParsedConfig parse_scenario_text(const std::string& text) {
  return build_config(parse_config_document(text));
}

// --- serialization -----------------------------------------------------------

namespace detail {

inline void serialize_law(std::string& out, const std::string& prefix, const DurationLaw& law) {
  out += prefix + "_dist = " + law.name() + "\n";
  out += prefix + "_p1 = " + format_double(law.p1) + "\n";
  if (law.kind != LawKind::Exponential && law.kind != LawKind::Point)
    out += prefix + "_p2 = " + format_double(law.p2) + "\n";
}

inline void serialize_model(std::string& out, const std::string& section,
                            const InfectivityModel& m) {
  out += "[" + section + "]\n";
  switch (m.family) {
    case Family::ConstantMarkov:
      out += "family = constant_markov\n";
      out += "beta = " + format_double(m.amplitude) + "\n";
      out += "gamma = " + format_double(m.recovery_rate) + "\n";
      break;
    case Family::PiecewiseIndicator:
      out += "family = piecewise_indicator\n";
      out += "beta = " + format_double(m.amplitude) + "\n";
      if (m.profile == ProfileKind::ExpDecay) {
        out += "profile = exp_decay\n";
        out += "profile_decay = " + format_double(m.profile_decay) + "\n";
      }
      serialize_law(out, "zeta", m.zeta_law);
      serialize_law(out, "eta", m.eta_law);
      break;
    case Family::ContinuousBump:
      out += "family = continuous_bump\n";
      out += "peak = " + format_double(m.amplitude) + "\n";
      serialize_law(out, "chi", m.chi_law);
      break;
    case Family::AgedInitial:
      out += "family = aged_initial\n";
      out += std::string("conditioning = ") +
             (m.role_tag == RoleTag::InitiallyExposed ? "exposed" : "infectious") + "\n";
      serialize_law(out, "age", m.age_law);
      out += "max_attempts = " + std::to_string(m.max_age_attempts) + "\n";
      break;
  }
}

}  // namespace detail

inline std::string serialize_scenario(const Scenario& sc) {
  std::string out;
  out += "[scenario]\n";
  out += std::string("variant = ") + variant_name(sc.variant) + "\n";
  out += "N = " + std::to_string(sc.population) + "\n";
  out += "e0_frac = " + format_double(sc.e0_frac) + "\n";
  out += "i0_frac = " + format_double(sc.i0_frac) + "\n";
  out += "r0_frac = " + format_double(sc.r0_frac) + "\n";
  out += "seed = " + std::to_string(sc.seed) + "\n";
  out += "replications = " + std::to_string(sc.replications) + "\n";
  out += std::string("init = ") + (sc.binomial_init ? "binomial" : "deterministic") + "\n";
  if (sc.variant == Variant::SIRS) {
    detail::serialize_law(out, "immune", sc.immune_law);
    detail::serialize_law(out, "immune0", sc.immune0_law);
  }
  out += "\n[grid]\n";
  out += "T = " + format_double(sc.horizon) + "\n";
  out += "delta = " + format_double(sc.output_step) + "\n";
  out += "\n";
  detail::serialize_model(out, "model", sc.model);
  if (sc.e0_frac > 0.0) {
    out += "\n";
    detail::serialize_model(out, "model0", sc.model0);
  }
  if (sc.i0_frac > 0.0) {
    out += "\n";
    detail::serialize_model(out, "model0I", sc.model0I);
  }
  return out;
}

// Structural equality for round-trip checks.
inline bool models_equal(const InfectivityModel& a, const InfectivityModel& b) {
  if (a.family != b.family || a.role_tag != b.role_tag || a.profile != b.profile) return false;
  if (a.amplitude != b.amplitude || a.profile_decay != b.profile_decay ||
      a.recovery_rate != b.recovery_rate)
    return false;
  if (!(a.zeta_law == b.zeta_law) || !(a.eta_law == b.eta_law) || !(a.chi_law == b.chi_law))
    return false;
  if (!(a.age_law == b.age_law) || a.max_age_attempts != b.max_age_attempts) return false;
  if ((a.base == nullptr) != (b.base == nullptr)) return false;
  if (a.base && !models_equal(*a.base, *b.base)) return false;
  return true;
}

inline bool scenarios_equal(const Scenario& a, const Scenario& b) {
  return a.variant == b.variant && a.population == b.population && a.horizon == b.horizon &&
         a.output_step == b.output_step && a.e0_frac == b.e0_frac && a.i0_frac == b.i0_frac &&
         a.r0_frac == b.r0_frac && a.seed == b.seed && a.replications == b.replications &&
         a.binomial_init == b.binomial_init && models_equal(a.model, b.model) &&
         (a.e0_frac == 0.0 || models_equal(a.model0, b.model0)) &&
         (a.i0_frac == 0.0 || models_equal(a.model0I, b.model0I)) &&
         (a.variant != Variant::SIRS ||
          (a.immune_law == b.immune_law && a.immune0_law == b.immune0_law));
}

}  // namespace varinf
