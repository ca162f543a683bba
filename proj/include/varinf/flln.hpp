#pragma once

#include <string>
#include <vector>

#include "varinf/infectivity.hpp"
#include "varinf/simulator.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// Deterministic FLLN limits: the coupled (S, FoI) Volterra system and the
// explicit Volterra formulas for E, I, R, on a uniform grid.
//
// Discretization: trapezoidal rule for every convolution, exponential
// integrating-factor update for S, per-step Picard iteration on the implicit
// right endpoint.  Cells where a tabulated kernel jumps fall back to a
// midpoint value.
// ---------------------------------------------------------------------------

struct FllnSolution {
  Grid grid;
  Variant variant = Variant::SEIR;
  std::vector<double> S, FoI, E, I, R, Upsilon;
  std::vector<double> lambda_bar, lambda0_bar, lambda0I_bar;
};

// A convolution kernel tabulated at grid nodes; `mid[c]` carries the value
// at cell midpoint (c + 1/2) * step for cells flagged non-smooth.
struct ConvKernel {
  std::vector<double> node;
  std::vector<double> mid;
  std::vector<std::uint8_t> rough;

  static ConvKernel smooth(std::vector<double> values) {
    ConvKernel k;
    k.node = std::move(values);
    return k;
  }

  bool is_rough(std::size_t c) const { return !rough.empty() && rough[c]; }
};

struct FllnInputs {
  Grid grid;
  Variant variant = Variant::SEIR;
  double e0 = 0.0, i0 = 0.0, r0 = 0.0;
  ConvKernel lambda_bar;                     // newly-infected mean infectivity
  std::vector<double> lambda0_bar;           // initially exposed mean
  std::vector<double> lambda0I_bar;          // initially infectious mean
  std::vector<double> Gc, Psi, Phi;          // newly infected sojourns
  std::vector<double> G0c, Psi0, Phi0;       // initially exposed sojourns
  std::vector<double> F0I;                   // initially infectious chi CDF
  std::vector<double> PsiS, Psi0S, Limm0_c;  // SIRS immune-convolved kernels
};

namespace detail {

// Trapezoid cell contribution of kernel k over cell [t_j, t_{j+1}] toward
// target node i (cell offset c = i - j - 1), with the right-endpoint factor
// f_right possibly implicit at the caller.
inline double cell_full(const ConvKernel& k, std::size_t i, std::size_t j, double step,
                        double f_left, double f_right) {
  std::size_t c = i - j - 1;
  if (k.is_rough(c)) return step * k.mid[c] * 0.5 * (f_left + f_right);
  return 0.5 * step * (k.node[i - j] * f_left + k.node[c] * f_right);
}

// Full convolution sum_{cells} of k(t_i - s) f(s) ds, all endpoints known.
inline double conv_at(const ConvKernel& k, const std::vector<double>& f, std::size_t i,
                      double step) {
  CompensatedSum acc;
  for (std::size_t j = 0; j < i; ++j) acc.add(cell_full(k, i, j, step, f[j], f[j + 1]));
  return acc.value();
}

// Convolution toward node i with the f[i] term left out; also returns the
// implicit coefficient w such that full = partial + w * f[i].
inline double conv_partial(const ConvKernel& k, const std::vector<double>& f, std::size_t i,
                           double step, double& w_implicit) {
  CompensatedSum acc;
  for (std::size_t j = 0; j + 1 < i; ++j) acc.add(cell_full(k, i, j, step, f[j], f[j + 1]));
  if (i >= 1) {
    if (k.is_rough(0)) {
      acc.add(step * k.mid[0] * 0.5 * f[i - 1]);
      w_implicit = step * k.mid[0] * 0.5;
    } else {
      acc.add(0.5 * step * k.node[1] * f[i - 1]);
      w_implicit = 0.5 * step * k.node[0];
    }
  } else {
    w_implicit = 0.0;
  }
  return acc.value();
}

}  // namespace detail

// Assemble solver inputs from the models of a scenario.
inline FllnInputs build_flln_inputs(const Scenario& sc, const Grid& grid,
                                    std::size_t mc_samples = 1'000'000) {
  FllnInputs in;
  in.grid = grid;
  in.variant = sc.variant;
  in.e0 = sc.e0_frac;
  in.i0 = sc.i0_frac;
  in.r0 = sc.r0_frac;
  const std::size_t n = grid.nodes;

  in.lambda_bar = ConvKernel::smooth(mean_infectivity_grid(sc.model, grid));
  {
    ConvKernel& k = in.lambda_bar;
    double scale = 0.0;
    for (double v : k.node) scale = std::max(scale, std::abs(v));
    std::vector<std::uint8_t> rough(n - 1, 0);
    bool any = false;
    for (std::size_t c = 0; c + 1 < n; ++c)
      if (std::abs(k.node[c + 1] - k.node[c]) > 0.25 * scale) {
        rough[c] = 1;
        any = true;
      }
    if (any) {
      k.rough = std::move(rough);
      k.mid.assign(n - 1, 0.0);
      for (std::size_t c = 0; c + 1 < n; ++c)
        k.mid[c] =
            k.rough[c]
                ? mean_infectivity(sc.model, (static_cast<double>(c) + 0.5) * grid.step).value
                : 0.5 * (k.node[c] + k.node[c + 1]);
    }
  }
  in.lambda0_bar =
      sc.e0_frac > 0.0 ? mean_infectivity_grid(sc.model0, grid) : std::vector<double>(n, 0.0);
  in.lambda0I_bar =
      sc.i0_frac > 0.0 ? mean_infectivity_grid(sc.model0I, grid) : std::vector<double>(n, 0.0);

  auto c = detail::sojourn_columns(sc.model, grid, mc_samples);
  in.Psi = std::move(c.Psi);
  in.Gc.resize(n);
  in.Phi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    in.Gc[i] = 1.0 - c.G[i];
    in.Phi[i] = 1.0 - in.Gc[i] - in.Psi[i];  // exact complement closure
  }
  if (sc.e0_frac > 0.0) {
    auto c0 = detail::sojourn_columns(sc.model0, grid, mc_samples);
    in.Psi0 = std::move(c0.Psi);
    in.G0c.resize(n);
    in.Phi0.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      in.G0c[i] = 1.0 - c0.G[i];
      in.Phi0[i] = 1.0 - in.G0c[i] - in.Psi0[i];
    }
  } else {
    in.G0c.assign(n, 0.0);
    in.Psi0.assign(n, 0.0);
    in.Phi0.assign(n, 0.0);
  }
  if (sc.i0_frac > 0.0) {
    auto cI = detail::sojourn_columns(sc.model0I, grid, mc_samples);
    in.F0I = std::move(cI.Phi);
  } else {
    in.F0I.assign(n, 0.0);
  }

  if (sc.variant == Variant::SIRS) {
    // Psi_SIRS(t) = P(infectious <= t < infectious + immune)
    //             = integral of Limm_c(t - x) against dPhi(x).
    auto stieltjes = [&](const std::vector<double>& cdf) {
      std::vector<double> outv(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        CompensatedSum s;
        for (std::size_t kk = 1; kk <= i; ++kk) {
          double dm = cdf[kk] - cdf[kk - 1];
          if (dm != 0.0)
            s.add(dm * sc.immune_law.ccdf(grid.time(i) - (grid.time(kk) - 0.5 * grid.step)));
        }
        outv[i] = s.value();
      }
      return outv;
    };
    in.PsiS = stieltjes(in.Phi);
    in.Psi0S = stieltjes(in.F0I);
    in.Limm0_c.resize(n);
    for (std::size_t i = 0; i < n; ++i) in.Limm0_c[i] = sc.immune0_law.ccdf(grid.time(i));
  }
  return in;
}

// Explicit Volterra formulas for the non-core compartments, by trapezoidal
// quadrature of the sojourn kernels against Upsilon.
inline void evaluate_compartments(const FllnInputs& in, const std::vector<double>& upsilon,
                                  std::vector<double>& E, std::vector<double>& I,
                                  std::vector<double>& R) {
  const std::size_t n = in.grid.nodes;
  const double step = in.grid.step;
  E.assign(n, 0.0);
  I.assign(n, 0.0);
  R.assign(n, 0.0);
  const ConvKernel gc = ConvKernel::smooth(in.Gc);
  const ConvKernel psi = ConvKernel::smooth(in.Psi);
  const ConvKernel phi = ConvKernel::smooth(in.Phi);
  const ConvKernel psiS = ConvKernel::smooth(in.PsiS);
  for (std::size_t i = 0; i < n; ++i) {
    switch (in.variant) {
      case Variant::SEIR:
        E[i] = in.e0 * in.G0c[i] + detail::conv_at(gc, upsilon, i, step);
        I[i] = in.i0 * (1.0 - in.F0I[i]) + in.e0 * in.Psi0[i] +
               detail::conv_at(psi, upsilon, i, step);
        R[i] = in.r0 + in.i0 * in.F0I[i] + in.e0 * in.Phi0[i] +
               detail::conv_at(phi, upsilon, i, step);
        break;
      case Variant::SIR:
        I[i] = in.i0 * (1.0 - in.F0I[i]) + detail::conv_at(psi, upsilon, i, step);
        R[i] = in.r0 + in.i0 * in.F0I[i] + detail::conv_at(phi, upsilon, i, step);
        break;
      case Variant::SIS:
        I[i] = in.i0 * (1.0 - in.F0I[i]) + detail::conv_at(psi, upsilon, i, step);
        break;
      case Variant::SIRS:
        I[i] = in.i0 * (1.0 - in.F0I[i]) + detail::conv_at(psi, upsilon, i, step);
        R[i] = in.r0 * in.Limm0_c[i] + in.i0 * in.Psi0S[i] +
               detail::conv_at(psiS, upsilon, i, step);
        break;
    }
  }
}

inline FllnSolution solve_flln(const FllnInputs& in, double picard_tol = 1e-12,
                               int max_picard = 100) {
  if (in.grid.step > 0.05 + 1e-12)
    throw std::invalid_argument("solve_flln: grid step must be <= 0.05");
  const std::size_t n = in.grid.nodes;
  const double step = in.grid.step;
  FllnSolution sol;
  sol.grid = in.grid;
  sol.variant = in.variant;
  sol.lambda_bar = in.lambda_bar.node;
  sol.lambda0_bar = in.lambda0_bar;
  sol.lambda0I_bar = in.lambda0I_bar;
  sol.S.assign(n, 0.0);
  sol.FoI.assign(n, 0.0);
  sol.Upsilon.assign(n, 0.0);

  auto forcing = [&](std::size_t i) {
    return in.e0 * in.lambda0_bar[i] + in.i0 * in.lambda0I_bar[i];
  };

  if (in.variant == Variant::SIR || in.variant == Variant::SEIR) {
    // S(t) = S(0) exp(-int FoI);  FoI(t) = forcing + conv(lambda_bar, S FoI).
    const double s0 = 1.0 - in.e0 - in.i0 - in.r0;
    double foi_integral = 0.0;
    sol.S[0] = s0;
    sol.FoI[0] = forcing(0);
    sol.Upsilon[0] = sol.S[0] * sol.FoI[0];
    for (std::size_t i = 1; i < n; ++i) {
      double w_impl = 0.0;
      double known = detail::conv_partial(in.lambda_bar, sol.Upsilon, i, step, w_impl);
      double fi = forcing(i);
      double J = sol.FoI[i - 1];
      double S = sol.S[i - 1];
      bool converged = false;
      for (int it = 0; it < max_picard; ++it) {
        S = s0 * std::exp(-(foi_integral + 0.5 * step * (sol.FoI[i - 1] + J)));
        double J_new = fi + known + w_impl * S * J;
        bool done = std::abs(J_new - J) <= picard_tol * std::max(1.0, std::abs(J_new));
        J = J_new;
        if (done) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw std::runtime_error("solve_flln: Picard iteration failed at step " +
                                 std::to_string(i));
      S = s0 * std::exp(-(foi_integral + 0.5 * step * (sol.FoI[i - 1] + J)));
      sol.FoI[i] = J;
      sol.S[i] = S;
      sol.Upsilon[i] = S * J;
      foi_integral += 0.5 * step * (sol.FoI[i - 1] + sol.FoI[i]);
    }
    evaluate_compartments(in, sol.Upsilon, sol.E, sol.I, sol.R);
    return sol;
  }

  // SIS / SIRS closed systems: S = 1 - I (- R).
  const bool sirs = in.variant == Variant::SIRS;
  sol.E.assign(n, 0.0);
  sol.I.assign(n, 0.0);
  sol.R.assign(n, 0.0);
  const ConvKernel ker_inf = ConvKernel::smooth(in.Psi);
  const ConvKernel ker_imm = ConvKernel::smooth(sirs ? in.PsiS : in.Psi);
  sol.I[0] = in.i0;
  sol.R[0] = sirs ? in.r0 : 0.0;
  sol.S[0] = 1.0 - sol.I[0] - sol.R[0];
  sol.FoI[0] = forcing(0);
  sol.Upsilon[0] = sol.S[0] * sol.FoI[0];
  for (std::size_t i = 1; i < n; ++i) {
    double wl = 0.0, wi = 0.0, wr = 0.0;
    double known_l = detail::conv_partial(in.lambda_bar, sol.Upsilon, i, step, wl);
    double known_i = detail::conv_partial(ker_inf, sol.Upsilon, i, step, wi);
    double known_r = sirs ? detail::conv_partial(ker_imm, sol.Upsilon, i, step, wr) : 0.0;
    double fJ = forcing(i);
    double fI = in.i0 * (1.0 - in.F0I[i]);
    double fR = sirs ? in.r0 * in.Limm0_c[i] + in.i0 * in.Psi0S[i] : 0.0;
    double J = sol.FoI[i - 1], I = sol.I[i - 1], Rv = sol.R[i - 1];
    bool converged = false;
    for (int it = 0; it < max_picard; ++it) {
      double ups = (1.0 - I - Rv) * J;
      double Jn = fJ + known_l + wl * ups;
      double In = fI + known_i + wi * ups;
      double Rn = sirs ? fR + known_r + wr * ups : 0.0;
      double delta = std::abs(Jn - J) + std::abs(In - I) + std::abs(Rn - Rv);
      J = Jn;
      I = In;
      Rv = Rn;
      if (delta <= picard_tol * std::max(1.0, std::abs(Jn))) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error("solve_flln: Picard iteration failed at step " +
                               std::to_string(i));
    sol.FoI[i] = J;
    sol.I[i] = I;
    sol.R[i] = Rv;
    sol.S[i] = 1.0 - I - Rv;
    sol.Upsilon[i] = sol.S[i] * sol.FoI[i];
  }
  return sol;
}

// Residual of the FoI fixed point: re-substitute the solved curves into the
// right-hand side and report the max absolute mismatch.
inline double flln_foi_residual(const FllnInputs& in, const FllnSolution& sol) {
  double worst = 0.0;
  for (std::size_t i = 0; i < in.grid.nodes; ++i) {
    double rhs = in.e0 * in.lambda0_bar[i] + in.i0 * in.lambda0I_bar[i] +
                 detail::conv_at(in.lambda_bar, sol.Upsilon, i, in.grid.step);
    worst = std::max(worst, std::abs(rhs - sol.FoI[i]));
  }
  return worst;
}

inline FllnSolution solve_flln(const Scenario& sc, const Grid& grid,
                               std::size_t mc_samples = 1'000'000) {
  return solve_flln(build_flln_inputs(sc, grid, mc_samples));
}

// Node-subset restriction onto a coarser grid (exact at shared nodes); the
// forward declaration order requires restrict_to below solve variants.
inline FllnSolution restrict_to(const FllnSolution& fine, const Grid& coarse);

// FLLN solve on a fine grid nested in `target`, restricted back to it.
inline FllnSolution solve_flln_nested(const Scenario& sc, const Grid& target,
                                      double max_step = 0.01) {
  if (target.step <= max_step + 1e-15) return solve_flln(sc, target);
  auto refine = static_cast<std::size_t>(std::ceil(target.step / max_step - 1e-12));
  Grid fine{target.step / static_cast<double>(refine), (target.nodes - 1) * refine + 1};
  return restrict_to(solve_flln(sc, fine), target);
}

// Node-subset restriction onto a coarser grid (exact at shared nodes).
inline FllnSolution restrict_to(const FllnSolution& fine, const Grid& coarse) {
  std::size_t stride = fine.grid.stride_of(coarse);
  if (stride == 0) throw std::invalid_argument("restrict_to: grids do not nest");
  FllnSolution out;
  out.grid = coarse;
  out.variant = fine.variant;
  auto pick = [&](const std::vector<double>& v) {
    std::vector<double> r(coarse.nodes);
    for (std::size_t i = 0; i < coarse.nodes; ++i) r[i] = v[i * stride];
    return r;
  };
  out.S = pick(fine.S);
  out.FoI = pick(fine.FoI);
  out.E = pick(fine.E);
  out.I = pick(fine.I);
  out.R = pick(fine.R);
  out.Upsilon = pick(fine.Upsilon);
  out.lambda_bar = pick(fine.lambda_bar);
  out.lambda0_bar = pick(fine.lambda0_bar);
  out.lambda0I_bar = pick(fine.lambda0I_bar);
  return out;
}

}  // namespace varinf
