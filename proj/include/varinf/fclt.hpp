#pragma once

#include <vector>

#include "varinf/flln.hpp"
#include "varinf/moments.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// FCLT engine: covariance kernels of the limiting Gaussian drivers, joint
// path sampling through a Cholesky factorization of the full block matrix,
// and the linear stochastic Volterra solve for the limit fluctuations.
//
// Sign convention: every fluctuation is sqrt(N) (X^N/N - X_limit).  Under it
// the susceptible equation reads
//     S_hat(t) = -E_hat(0) - I_hat(0) + W_S(t) - int_0^t Upsilon_hat(s) ds,
// with W_S the (centered Gaussian) limit of minus the compensated infection
// martingale; this is the one orientation under which the compartment noises
// sum to zero pathwise.
// ---------------------------------------------------------------------------

enum class ProcessTag : std::uint8_t { S, FoI, E, I, R };

inline const char* process_name(ProcessTag p) {
  switch (p) {
    case ProcessTag::S: return "S";
    case ProcessTag::FoI: return "FoI";
    case ProcessTag::E: return "E";
    case ProcessTag::I: return "I";
    case ProcessTag::R: return "R";
  }
  return "?";
}

inline std::vector<ProcessTag> driver_processes(Variant v) {
  switch (v) {
    case Variant::SEIR:
      return {ProcessTag::S, ProcessTag::FoI, ProcessTag::E, ProcessTag::I, ProcessTag::R};
    case Variant::SIR:
      return {ProcessTag::S, ProcessTag::FoI, ProcessTag::I, ProcessTag::R};
    case Variant::SIS: return {ProcessTag::FoI, ProcessTag::I};
    case Variant::SIRS: return {ProcessTag::FoI, ProcessTag::I, ProcessTag::R};
  }
  return {};
}

namespace detail {

// Immune-weighted moments for the SIRS recovered/immune region, where the
// immune period is an independent draw on top of the infectious path:
//   D_M[m] = sum over atoms with chi <= t_m of w * Limm_ccdf(t_M - chi).
struct SirsImmuneMoments {
  std::size_t n = 0;
  std::vector<double> lr;      // E[lambda(t_u) 1{immune at t_v}]
  std::vector<double> pir;     // P(infectious at t_u, immune at t_v)
  std::vector<double> prr;     // P(immune at both)
  std::vector<double> marg_r;  // P(immune at t_v)

  void build(const InfectivityModel& m, const Grid& grid, const DurationLaw& immune,
             std::size_t budget) {
    n = grid.nodes;
    lr.assign(n * n, 0.0);
    pir.assign(n * n, 0.0);
    prr.assign(n * n, 0.0);
    marg_r.assign(n, 0.0);
    auto atoms = model_atoms(m, budget);
    std::sort(atoms.begin(), atoms.end(),
              [](const PathAtom& a, const PathAtom& b) { return a.chi < b.chi; });
    const std::size_t K = atoms.size();
    const bool const_prof = constant_active_profile(m);
    const double amp = m.lambda_star;

    std::vector<double> DM(n);
    for (std::size_t M = 0; M < n; ++M) {
      double tM = grid.time(M);
      {
        CompensatedSum acc;
        std::size_t k = 0;
        for (std::size_t mdx = 0; mdx < n; ++mdx) {
          double tm = grid.time(mdx);
          while (k < K && atoms[k].chi <= tm) {
            acc.add(atoms[k].w * immune.ccdf(tM - atoms[k].chi));
            ++k;
          }
          DM[mdx] = acc.value();
        }
      }
      marg_r[M] = DM[M];
      for (std::size_t u = 0; u < n; ++u) {
        // infectious at u, immune at M: chi in (t_u, t_M]
        double v = DM[M] - DM[std::min(u, M)];
        pir[u * n + M] = v;
        if (const_prof) lr[u * n + M] = amp * v;
      }
      for (std::size_t u = 0; u <= M; ++u) {
        // immune at both u and M (u <= M): chi <= t_u, immune > t_M - chi
        prr[u * n + M] = DM[u];
        prr[M * n + u] = DM[u];
      }
    }
    if (!const_prof) {
      for (const auto& a : atoms) {
        std::size_t ix = node_at_or_after(a.chi, grid);
        for (std::size_t u = 0; u < std::min(ix, n); ++u) {
          double val = atom_value(m, a, grid.time(u));
          if (val == 0.0) continue;
          for (std::size_t v = ix; v < n; ++v)
            lr[u * n + v] += a.w * val * immune.ccdf(grid.time(v) - a.chi);
        }
      }
    }
  }
};

}  // namespace detail

struct CovKernelSet {
  Grid grid;
  Variant variant = Variant::SEIR;
  std::vector<ProcessTag> procs;
  std::size_t dim = 0;
  std::vector<double> matrix;  // dim x dim, symmetric, pre-jitter
  FllnInputs inputs;           // solver kernels on this grid
  FllnSolution flln;           // limit curves restricted to this grid
  double immune0_var_weight = 0.0;  // SIRS initially-immune fraction
  std::vector<double> immune0_ccdf;
  double mc_se = 0.0;

  double cov(std::size_t a, std::size_t i, std::size_t b, std::size_t j) const {
    std::size_t n = grid.nodes;
    return matrix[(a * n + i) * dim + (b * n + j)];
  }
  std::size_t proc_index(ProcessTag p) const {
    for (std::size_t a = 0; a < procs.size(); ++a)
      if (procs[a] == p) return a;
    return procs.size();
  }
};

namespace detail {

// E[phi_a(u) phi_b(v)] for one newly-infected individual, phi_S = -1.
struct MarkMoments {
  const ModelMoments* mm = nullptr;
  const SirsImmuneMoments* sirs = nullptr;  // non-null for SIRS recovered marks

  double marginal(ProcessTag p, std::size_t v) const {
    switch (p) {
      case ProcessTag::S: return -1.0;
      case ProcessTag::FoI: return mm->mean(v);
      case ProcessTag::E: return mm->marg(Region::Exposed, v);
      case ProcessTag::I: return mm->marg(Region::Infectious, v);
      case ProcessTag::R:
        return sirs ? sirs->marg_r[v] : mm->marg(Region::Recovered, v);
    }
    return 0.0;
  }

  static Region region_of(ProcessTag p) {
    return p == ProcessTag::E ? Region::Exposed
           : p == ProcessTag::I ? Region::Infectious
                                : Region::Recovered;
  }

  double joint(ProcessTag a, std::size_t u, ProcessTag b, std::size_t v) const {
    const std::size_t n = mm->grid().nodes;
    if (a == ProcessTag::S && b == ProcessTag::S) return 1.0;
    if (a == ProcessTag::S) return -marginal(b, v);
    if (b == ProcessTag::S) return -marginal(a, u);
    if (a == ProcessTag::FoI && b == ProcessTag::FoI) return mm->lambda_lambda(u, v);
    if (a == ProcessTag::FoI) {
      if (b == ProcessTag::R && sirs) return sirs->lr[u * n + v];
      return mm->lambda_region(u, v, region_of(b));
    }
    if (b == ProcessTag::FoI) return joint(b, v, a, u);
    if (sirs && (a == ProcessTag::R || b == ProcessTag::R)) {
      if (a == ProcessTag::R && b == ProcessTag::R) return sirs->prr[u * n + v];
      if (a == ProcessTag::I) return sirs->pir[u * n + v];
      return sirs->pir[v * n + u];  // (R, I): transpose
    }
    return mm->region_region(region_of(a), u, region_of(b), v);
  }

  // Centered covariance of the per-individual marks (initial individuals;
  // the S mark is zero for them).
  double initial_cov(ProcessTag a, std::size_t u, ProcessTag b, std::size_t v) const {
    if (a == ProcessTag::S || b == ProcessTag::S) return 0.0;
    return joint(a, u, b, v) - marginal(a, u) * marginal(b, v);
  }
};

}  // namespace detail

// Assemble every covariance entry of the driving Gaussian vector by
// trapezoidal quadrature of the per-event mark moments against
// Upsilon = S_bar * FoI_bar, plus the centered initial-individual terms.
inline CovKernelSet build_covariance_kernels(const Scenario& sc, const FllnSolution& flln_fine,
                                             const Grid& grid,
                                             std::size_t mc_samples = 1'000'000) {
  if (grid.nodes > 801)
    throw std::invalid_argument("build_covariance_kernels: sampling grid capped at 801 nodes");
  CovKernelSet ks;
  ks.grid = grid;
  ks.variant = sc.variant;
  ks.procs = driver_processes(sc.variant);
  const std::size_t q = ks.procs.size();
  const std::size_t n = grid.nodes;
  ks.dim = q * n;
  ks.inputs = build_flln_inputs(sc, grid, mc_samples);
  ks.flln = flln_fine.grid == grid ? flln_fine : restrict_to(flln_fine, grid);

  ModelMoments mm(sc.model, grid, mc_samples);
  detail::MarkMoments marks{&mm, nullptr};
  detail::SirsImmuneMoments sirs_new;
  std::optional<ModelMoments> mm0, mm0I;
  detail::SirsImmuneMoments sirs_0I;
  detail::MarkMoments marks0, marks0I;
  if (sc.variant == Variant::SIRS) {
    sirs_new.build(sc.model, grid, sc.immune_law, 20'000);
    marks.sirs = &sirs_new;
  }
  if (sc.e0_frac > 0.0) {
    mm0.emplace(sc.model0, grid, mc_samples);
    marks0 = {&*mm0, nullptr};
  }
  if (sc.i0_frac > 0.0) {
    mm0I.emplace(sc.model0I, grid, mc_samples);
    marks0I = {&*mm0I, nullptr};
    if (sc.variant == Variant::SIRS) {
      sirs_0I.build(sc.model0I, grid, sc.immune_law, 20'000);
      marks0I.sirs = &sirs_0I;
    }
  }
  ks.mc_se = mm.mc_se();

  if (sc.variant == Variant::SIRS && sc.r0_frac > 0.0) {
    ks.immune0_var_weight = sc.r0_frac;
    ks.immune0_ccdf.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      ks.immune0_ccdf[i] = sc.immune0_law.ccdf(grid.time(i));
  }

  const std::vector<double>& ups = ks.flln.Upsilon;
  const double step = grid.step;
  ks.matrix.assign(ks.dim * ks.dim, 0.0);

  for (std::size_t a = 0; a < q; ++a) {
    for (std::size_t b = a; b < q; ++b) {
      ProcessTag pa = ks.procs[a], pb = ks.procs[b];
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t jlo = a == b ? i : 0;
        for (std::size_t j = jlo; j < n; ++j) {
          std::size_t mn = std::min(i, j);
          CompensatedSum acc;
          for (std::size_t k = 0; k <= mn; ++k) {
            double w = (k == 0 || k == mn) ? 0.5 : 1.0;
            if (mn == 0) w = 0.5;  // degenerate cell; integral is 0 anyway
            acc.add(w * step * ups[k] * marks.joint(pa, i - k, pb, j - k));
          }
          double entry = mn == 0 ? 0.0 : acc.value();
          if (sc.e0_frac > 0.0) entry += sc.e0_frac * marks0.initial_cov(pa, i, pb, j);
          if (sc.i0_frac > 0.0) entry += sc.i0_frac * marks0I.initial_cov(pa, i, pb, j);
          if (ks.immune0_var_weight > 0.0 && pa == ProcessTag::R && pb == ProcessTag::R) {
            double cmax = ks.immune0_ccdf[std::max(i, j)];
            entry += ks.immune0_var_weight *
                     (cmax - ks.immune0_ccdf[i] * ks.immune0_ccdf[j]);
          }
          std::size_t r = a * n + i, c = b * n + j;
          ks.matrix[r * ks.dim + c] = entry;
          ks.matrix[c * ks.dim + r] = entry;
        }
      }
    }
  }
  return ks;
}

// --- factorization and sampling -------------------------------------------

struct PsdFactor {
  std::size_t dim = 0;
  std::vector<double> L;  // lower triangular, row major
  double jitter = 0.0;    // absolute diagonal shift that was applied
};

// Pivot-tolerant Cholesky for positive semidefinite matrices: pivots within
// noise of zero truncate their column, preserving exact linear dependences
// (the compartment sum-to-zero direction) instead of polluting them.  If a
// pivot is significantly negative the factorization restarts with a jitter
// ridge, escalating x10 from 1e-10 to 1e-6 of the mean diagonal.
inline PsdFactor factor_covariance(const std::vector<double>& matrix, std::size_t dim) {
  double trace_mean = 0.0;
  for (std::size_t i = 0; i < dim; ++i) trace_mean += matrix[i * dim + i];
  trace_mean = std::max(trace_mean / static_cast<double>(dim), 1e-300);

  auto attempt = [&](double jitter, PsdFactor& out) {
    out.dim = dim;
    out.jitter = jitter;
    out.L.assign(dim * dim, 0.0);
    const double zero_tol = 1e-12 * trace_mean;
    const double fail_tol = 1e-8 * trace_mean;
    for (std::size_t j = 0; j < dim; ++j) {
      double d = matrix[j * dim + j] + jitter;
      const double* lj = &out.L[j * dim];
      for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
      if (d > zero_tol) {
        double ljj = std::sqrt(d);
        out.L[j * dim + j] = ljj;
        for (std::size_t i = j + 1; i < dim; ++i) {
          double s = matrix[i * dim + j];
          const double* li = &out.L[i * dim];
          for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
          out.L[i * dim + j] = s / ljj;
        }
      } else if (d > -fail_tol) {
        // treat as an exact linear dependence
        out.L[j * dim + j] = 0.0;
      } else {
        return false;
      }
    }
    return true;
  };

  PsdFactor f;
  if (attempt(0.0, f)) return f;
  for (double eps = 1e-10; eps <= 1.0000001e-6; eps *= 10.0)
    if (attempt(eps * trace_mean, f)) return f;
  throw std::runtime_error(
      "factor_covariance: matrix not PSD within the maximal jitter (inconsistent inputs)");
}

struct DriverEnsemble {
  Grid grid;
  std::vector<ProcessTag> procs;
  std::size_t count = 0;
  std::vector<std::vector<double>> paths;  // [path][proc * nodes + node]
  double jitter = 0.0;

  double w(std::size_t path, std::size_t proc, std::size_t node) const {
    return paths[path][proc * grid.nodes + node];
  }
};

inline DriverEnsemble sample_gaussian_drivers(const CovKernelSet& ks, std::uint64_t seed,
                                              std::size_t count) {
  PsdFactor f = factor_covariance(ks.matrix, ks.dim);
  DriverEnsemble out;
  out.grid = ks.grid;
  out.procs = ks.procs;
  out.count = count;
  out.jitter = f.jitter;
  out.paths.assign(count, std::vector<double>(ks.dim, 0.0));
  parallel_for(count, [&](std::size_t p) {
    Rng rng = engine_for(seed, p);
    std::vector<double> z(ks.dim);
    for (auto& v : z) v = standard_normal(rng);
    auto& x = out.paths[p];
    for (std::size_t i = 0; i < ks.dim; ++i) {
      const double* li = &f.L[i * ks.dim];
      double s = 0.0;
      for (std::size_t k = 0; k <= i; ++k) s += li[k] * z[k];
      x[i] = s;
    }
  });
  return out;
}

// Optional Gaussian initial-condition fluctuations with a user covariance
// (for binomial-initialization studies); the default everywhere else is the
// deterministic zero draw.
struct InitialFluctuations {
  std::vector<double> e0, i0;
};

inline InitialFluctuations sample_initial_fluctuations(std::uint64_t seed, std::size_t count,
                                                       double var_e, double var_i,
                                                       double cov_ei = 0.0) {
  if (var_e < 0.0 || var_i < 0.0 || cov_ei * cov_ei > var_e * var_i)
    throw std::invalid_argument("sample_initial_fluctuations: covariance not PSD");
  InitialFluctuations out;
  out.e0.resize(count);
  out.i0.resize(count);
  double l11 = std::sqrt(var_e);
  double l21 = l11 > 0.0 ? cov_ei / l11 : 0.0;
  double l22 = std::sqrt(std::max(var_i - l21 * l21, 0.0));
  for (std::size_t p = 0; p < count; ++p) {
    Rng rng = engine_for(seed, 0x1f0 + p);
    double z1 = standard_normal(rng), z2 = standard_normal(rng);
    out.e0[p] = l11 * z1;
    out.i0[p] = l21 * z1 + l22 * z2;
  }
  return out;
}

// --- the linear stochastic Volterra solve ----------------------------------

struct FcltEnsemble {
  Grid grid;
  Variant variant = Variant::SEIR;
  std::size_t count = 0;
  std::vector<std::vector<double>> S, FoI, E, I, R, Upsilon;  // [path][node]
  std::vector<double> e0_hat, i0_hat, r0_hat;
  DriverEnsemble drivers;
};

inline FcltEnsemble solve_fclt_paths(const DriverEnsemble& drivers, const CovKernelSet& ks,
                                     std::vector<double> e0_hat = {},
                                     std::vector<double> i0_hat = {},
                                     std::vector<double> r0_hat = {}) {
  if (!(drivers.grid == ks.grid))
    throw std::invalid_argument("solve_fclt_paths: drivers and kernels on different grids");
  const std::size_t n = ks.grid.nodes;
  const double step = ks.grid.step;
  const std::size_t count = drivers.count;
  const FllnInputs& in = ks.inputs;
  const FllnSolution& bar = ks.flln;

  if (e0_hat.empty()) e0_hat.assign(count, 0.0);
  if (i0_hat.empty()) i0_hat.assign(count, 0.0);
  if (r0_hat.empty()) r0_hat.assign(count, 0.0);
  if (e0_hat.size() != count || i0_hat.size() != count || r0_hat.size() != count)
    throw std::invalid_argument("solve_fclt_paths: initial draw count mismatch");

  FcltEnsemble out;
  out.grid = ks.grid;
  out.variant = ks.variant;
  out.count = count;
  out.e0_hat = e0_hat;
  out.i0_hat = i0_hat;
  out.r0_hat = r0_hat;
  out.drivers = drivers;
  auto blank = [&] { return std::vector<std::vector<double>>(count, std::vector<double>(n, 0.0)); };
  out.S = blank();
  out.FoI = blank();
  out.E = blank();
  out.I = blank();
  out.R = blank();
  out.Upsilon = blank();

  const std::size_t iS = ks.proc_index(ProcessTag::S);
  const std::size_t iF = ks.proc_index(ProcessTag::FoI);
  const std::size_t iE = ks.proc_index(ProcessTag::E);
  const std::size_t iI = ks.proc_index(ProcessTag::I);
  const std::size_t iR = ks.proc_index(ProcessTag::R);
  const std::size_t q = ks.procs.size();
  auto W = [&](const std::vector<double>& path, std::size_t proc, std::size_t node) {
    return proc < q ? path[proc * n + node] : 0.0;
  };

  const ConvKernel ker_psi = ConvKernel::smooth(in.Psi);
  const ConvKernel ker_gc = ConvKernel::smooth(in.Gc);
  const ConvKernel ker_phi = ConvKernel::smooth(in.Phi);
  const ConvKernel ker_psiS =
      ks.variant == Variant::SIRS ? ConvKernel::smooth(in.PsiS) : ConvKernel{};

  parallel_for(count, [&](std::size_t p) {
    const auto& wpath = drivers.paths[p];
    auto& Sh = out.S[p];
    auto& Jh = out.FoI[p];
    auto& Eh = out.E[p];
    auto& Ih = out.I[p];
    auto& Rh = out.R[p];
    auto& Uh = out.Upsilon[p];
    const double e0h = e0_hat[p], i0h = i0_hat[p], r0h = r0_hat[p];

    if (ks.variant == Variant::SEIR || ks.variant == Variant::SIR) {
      double trap_known = 0.0;  // trapezoid of Upsilon_hat over [0, t_{i-1}]
      for (std::size_t i = 0; i < n; ++i) {
        double wl = 0.0;
        double known_J = detail::conv_partial(in.lambda_bar, Uh, i, step, wl);
        double h = i == 0 ? 0.0 : 0.5 * step;
        double T_part = i == 0 ? 0.0 : trap_known + 0.5 * step * Uh[i - 1];
        double rS = -(e0h + i0h) + W(wpath, iS, i) - T_part;
        double rJ = i0h * in.lambda0I_bar[i] + e0h * in.lambda0_bar[i] + W(wpath, iF, i) +
                    known_J;
        double Jb = bar.FoI[i], Sb = bar.S[i];
        // [1 + h*Jb, h*Sb; -wl*Jb, 1 - wl*Sb] [Shat; Jhat] = [rS; rJ]
        double a11 = 1.0 + h * Jb, a12 = h * Sb;
        double a21 = -wl * Jb, a22 = 1.0 - wl * Sb;
        double det = a11 * a22 - a12 * a21;
        Sh[i] = (rS * a22 - a12 * rJ) / det;
        Jh[i] = (a11 * rJ - a21 * rS) / det;
        Uh[i] = Sh[i] * Jb + Sb * Jh[i];
        if (i > 0) trap_known += 0.5 * step * (Uh[i - 1] + Uh[i]);
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (ks.variant == Variant::SEIR)
          Eh[i] = e0h * in.G0c[i] + W(wpath, iE, i) + detail::conv_at(ker_gc, Uh, i, step);
        Ih[i] = i0h * (1.0 - in.F0I[i]) + e0h * in.Psi0[i] + W(wpath, iI, i) +
                detail::conv_at(ker_psi, Uh, i, step);
        Rh[i] = i0h * in.F0I[i] + e0h * in.Phi0[i] + W(wpath, iR, i) +
                detail::conv_at(ker_phi, Uh, i, step);
      }
      return;
    }

    if (ks.variant == Variant::SIS) {
      for (std::size_t i = 0; i < n; ++i) {
        double wl = 0.0, wi = 0.0;
        double known_J = detail::conv_partial(in.lambda_bar, Uh, i, step, wl);
        double known_I = detail::conv_partial(ker_psi, Uh, i, step, wi);
        double rJ = i0h * in.lambda0I_bar[i] + W(wpath, iF, i) + known_J;
        double rI = i0h * (1.0 - in.F0I[i]) + W(wpath, iI, i) + known_I;
        double Jb = bar.FoI[i], Sb = bar.S[i];
        // Upsilon_hat = Sb*Jhat - Jb*Ihat
        double a11 = 1.0 - wl * Sb, a12 = wl * Jb;
        double a21 = -wi * Sb, a22 = 1.0 + wi * Jb;
        double det = a11 * a22 - a12 * a21;
        Jh[i] = (rJ * a22 - a12 * rI) / det;
        Ih[i] = (a11 * rI - a21 * rJ) / det;
        Uh[i] = Sb * Jh[i] - Jb * Ih[i];
        Sh[i] = -Ih[i];
      }
      return;
    }

    // SIRS: unknowns (FoI, I, R); Upsilon_hat = Sb*Jhat - Jb*(Ihat + Rhat).
    for (std::size_t i = 0; i < n; ++i) {
      double wl = 0.0, wi = 0.0, wr = 0.0;
      double known_J = detail::conv_partial(in.lambda_bar, Uh, i, step, wl);
      double known_I = detail::conv_partial(ker_psi, Uh, i, step, wi);
      double known_R = detail::conv_partial(ker_psiS, Uh, i, step, wr);
      double rJ = i0h * in.lambda0I_bar[i] + W(wpath, iF, i) + known_J;
      double rI = i0h * (1.0 - in.F0I[i]) + W(wpath, iI, i) + known_I;
      double rR = r0h * in.Limm0_c[i] + i0h * in.Psi0S[i] + W(wpath, iR, i) + known_R;
      double Jb = bar.FoI[i], Sb = bar.S[i];
      double m[9] = {1.0 - wl * Sb, wl * Jb,       wl * Jb,
                     -wi * Sb,      1.0 + wi * Jb, wi * Jb,
                     -wr * Sb,      wr * Jb,       1.0 + wr * Jb};
      double rhs[3] = {rJ, rI, rR};
      // Gaussian elimination, 3x3
      for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int rr2 = c + 1; rr2 < 3; ++rr2)
          if (std::abs(m[rr2 * 3 + c]) > std::abs(m[piv * 3 + c])) piv = rr2;
        if (piv != c) {
          for (int cc = 0; cc < 3; ++cc) std::swap(m[c * 3 + cc], m[piv * 3 + cc]);
          std::swap(rhs[c], rhs[piv]);
        }
        for (int rr2 = c + 1; rr2 < 3; ++rr2) {
          double fkt = m[rr2 * 3 + c] / m[c * 3 + c];
          for (int cc = c; cc < 3; ++cc) m[rr2 * 3 + cc] -= fkt * m[c * 3 + cc];
          rhs[rr2] -= fkt * rhs[c];
        }
      }
      double x2 = rhs[2] / m[8];
      double x1 = (rhs[1] - m[5] * x2) / m[4];
      double x0 = (rhs[0] - m[1] * x1 - m[2] * x2) / m[0];
      Jh[i] = x0;
      Ih[i] = x1;
      Rh[i] = x2;
      Uh[i] = Sb * x0 - Jb * (x1 + x2);
      Sh[i] = -x1 - x2;
    }
  });
  return out;
}

// --- empirical covariance with jackknife standard errors --------------------

struct CovEstimate {
  std::size_t dim = 0;
  std::vector<double> value;  // dim x dim
  std::vector<double> se;     // dim x dim

  double at(std::size_t i, std::size_t j) const { return value[i * dim + j]; }
  double se_at(std::size_t i, std::size_t j) const { return se[i * dim + j]; }
};

struct ProcessTime {
  ProcessTag proc;
  double time;
};

// Unbiased sample covariance over row vectors (one row per replication),
// with leave-one-out jackknife standard errors.
inline CovEstimate sample_covariance(const std::vector<std::vector<double>>& rows) {
  const std::size_t Rn = rows.size();
  if (Rn < 3) throw std::invalid_argument("sample_covariance: need >= 3 rows");
  const std::size_t d = rows[0].size();
  CovEstimate est;
  est.dim = d;
  est.value.assign(d * d, 0.0);
  est.se.assign(d * d, 0.0);
  const double Rd = static_cast<double>(Rn);
  std::vector<double> sx(d, 0.0), sxy(d * d, 0.0);
  for (const auto& x : rows)
    for (std::size_t k = 0; k < d; ++k) {
      sx[k] += x[k];
      for (std::size_t l = 0; l < d; ++l) sxy[k * d + l] += x[k] * x[l];
    }
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l)
      est.value[k * d + l] = (sxy[k * d + l] - sx[k] * sx[l] / Rd) / (Rd - 1.0);
  std::vector<double> jk_mean(d * d, 0.0), jk_m2(d * d, 0.0);
  for (std::size_t p = 0; p < Rn; ++p)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < d; ++l) {
        double sxk = sx[k] - rows[p][k], sxl = sx[l] - rows[p][l];
        double skl = sxy[k * d + l] - rows[p][k] * rows[p][l];
        double c = (skl - sxk * sxl / (Rd - 1.0)) / (Rd - 2.0);
        double dlt = c - jk_mean[k * d + l];
        jk_mean[k * d + l] += dlt / static_cast<double>(p + 1);
        jk_m2[k * d + l] += dlt * (c - jk_mean[k * d + l]);
      }
  for (std::size_t k = 0; k < d * d; ++k)
    est.se[k] = std::sqrt(std::max(jk_m2[k], 0.0) * (Rd - 1.0) / Rd);
  return est;
}

// Sample covariance of the selected ensemble processes at the selected times.
inline CovEstimate limit_covariance_estimate(const FcltEnsemble& ens,
                                             const std::vector<ProcessTime>& sel) {
  const std::size_t d = sel.size();
  std::vector<std::vector<double>> rows(ens.count, std::vector<double>(d));
  for (std::size_t p = 0; p < ens.count; ++p)
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t node = ens.grid.index_of(sel[k].time);
      const std::vector<std::vector<double>>* src = nullptr;
      switch (sel[k].proc) {
        case ProcessTag::S: src = &ens.S; break;
        case ProcessTag::FoI: src = &ens.FoI; break;
        case ProcessTag::E: src = &ens.E; break;
        case ProcessTag::I: src = &ens.I; break;
        case ProcessTag::R: src = &ens.R; break;
      }
      rows[p][k] = (*src)[p][node];
    }
  return sample_covariance(rows);
}

}  // namespace varinf
