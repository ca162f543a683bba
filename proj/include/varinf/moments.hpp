#pragma once

#include <vector>

#include "varinf/infectivity.hpp"

namespace varinf {

// ---------------------------------------------------------------------------
// Grid tables of the joint moments the covariance kernels are built from:
//
//   mean(i)                E[lambda(t_i)]
//   lambda_lambda(i,j)     E[lambda(t_i) lambda(t_j)]
//   lambda_region(i,j,r)   E[lambda(t_i) 1{region r at age t_j}]
//   region_region(a,i,b,j) P(region a at t_i, region b at t_j)
//   marg(r,i)              P(region r at t_i)
//
// Recovered-region entries are derived by complement from the stored
// exposed/infectious tables, so the three regions partition the mean and the
// marginals exactly in floating point; the compartment-noise sum-to-zero
// identity inherits that exactness.
// ---------------------------------------------------------------------------

class ModelMoments {
 public:
  ModelMoments(const InfectivityModel& m, const Grid& grid, std::size_t mc_samples = 1'000'000)
      : grid_(grid), n_(grid.nodes) {
    if (n_ > 2048)
      throw std::invalid_argument("ModelMoments: kernel grid too fine (cap 2048 nodes)");
    mean_.assign(n_, 0.0);
    marg_e_.assign(n_, 0.0);
    marg_i_.assign(n_, 0.0);
    ll_.assign(n_ * n_, 0.0);
    le_.assign(n_ * n_, 0.0);
    li_.assign(n_ * n_, 0.0);
    pee_.assign(n_ * n_, 0.0);
    pei_.assign(n_ * n_, 0.0);
    pii_.assign(n_ * n_, 0.0);
    if (auto ee = detail::as_exp_exp(m)) {
      fill_exp_exp(m, *ee);
    } else if (m.family == Family::PiecewiseIndicator) {
      fill_piecewise(m);
    } else if (m.family == Family::ContinuousBump) {
      fill_bump(m);
    } else if (detail::constant_active_profile(m)) {
      fill_aged_histogram(m, mc_samples);
    } else {
      fill_aged_direct(m, mc_samples);
    }
  }

  const Grid& grid() const { return grid_; }
  double mc_se() const { return mc_se_; }

  double mean(std::size_t i) const { return mean_[i]; }

  double marg(Region r, std::size_t i) const {
    switch (r) {
      case Region::Exposed: return marg_e_[i];
      case Region::Infectious: return marg_i_[i];
      case Region::Recovered: return 1.0 - marg_e_[i] - marg_i_[i];
    }
    return 0.0;
  }

  double lambda_lambda(std::size_t i, std::size_t j) const { return ll_[i * n_ + j]; }

  double lambda_region(std::size_t i, std::size_t j, Region r) const {
    switch (r) {
      case Region::Exposed: return le_[i * n_ + j];
      case Region::Infectious: return li_[i * n_ + j];
      case Region::Recovered: return mean_[i] - le_[i * n_ + j] - li_[i * n_ + j];
    }
    return 0.0;
  }

  double region_region(Region ra, std::size_t i, Region rb, std::size_t j) const {
    if (ra == Region::Recovered)
      return marg(rb, j) - region_region(Region::Exposed, i, rb, j) -
             region_region(Region::Infectious, i, rb, j);
    if (rb == Region::Recovered)
      return marg(ra, i) - region_region(ra, i, Region::Exposed, j) -
             region_region(ra, i, Region::Infectious, j);
    if (ra == Region::Exposed)
      return rb == Region::Exposed ? pee_[i * n_ + j] : pei_[i * n_ + j];
    return rb == Region::Exposed ? pei_[j * n_ + i] : pii_[i * n_ + j];
  }

 private:
  Grid grid_;
  std::size_t n_;
  std::vector<double> mean_, marg_e_, marg_i_;
  std::vector<double> ll_, le_, li_, pee_, pei_, pii_;
  double mc_se_ = 0.0;

  std::size_t at(std::size_t i, std::size_t j) const { return i * n_ + j; }

  void fill_exp_exp(const InfectivityModel& m, detail::ExpExpParams ee) {
    const double beta = m.amplitude, g = ee.gamma, nu = ee.nu;
    for (std::size_t i = 0; i < n_; ++i) {
      double t = grid_.time(i);
      marg_e_[i] = nu < 0.0 ? 0.0 : std::exp(-nu * t);
      marg_i_[i] = nu < 0.0 ? std::exp(-g * t) : detail::exp_exp_joint(nu, g, t, t);
      mean_[i] = beta * marg_i_[i];
    }
    for (std::size_t i = 0; i < n_; ++i) {
      double ti = grid_.time(i);
      for (std::size_t j = 0; j < n_; ++j) {
        double tj = grid_.time(j);
        double mn = std::min(ti, tj), mx = std::max(ti, tj);
        double joint = nu < 0.0 ? std::exp(-g * mx) : detail::exp_exp_joint(nu, g, mn, mx);
        ll_[at(i, j)] = beta * beta * joint;
        li_[at(i, j)] = beta * joint;
        pii_[at(i, j)] = joint;
        if (nu >= 0.0) {
          pee_[at(i, j)] = std::exp(-nu * mx);
          if (ti < tj)
            pei_[at(i, j)] =
                detail::exp_exp_joint(nu, g, tj, tj) - detail::exp_exp_joint(nu, g, ti, tj);
          if (tj < ti)
            le_[at(i, j)] = beta * (detail::exp_exp_joint(nu, g, ti, ti) -
                                    detail::exp_exp_joint(nu, g, tj, ti));
        }
      }
    }
  }

  // P_A[m] = sum over zeta atoms u <= t_m of w * eta_ccdf(t_A - u); every
  // piecewise table entry is a difference of these prefixes.
  void fill_piecewise(const InfectivityModel& m) {
    auto dz = DiscretizedLaw::from(m.zeta_law, 4096);
    const std::size_t K = dz.points.size();
    std::vector<double> prof(n_);
    for (std::size_t i = 0; i < n_; ++i)
      prof[i] = m.profile == ProfileKind::ExpDecay
                    ? m.amplitude * std::exp(-m.profile_decay * grid_.time(i))
                    : m.amplitude;
    for (std::size_t i = 0; i < n_; ++i) marg_e_[i] = m.zeta_law.ccdf(grid_.time(i));

    std::vector<double> PA(n_);
    for (std::size_t A = 0; A < n_; ++A) {
      double tA = grid_.time(A);
      {
        CompensatedSum acc;
        std::size_t k = 0;
        for (std::size_t mdx = 0; mdx < n_; ++mdx) {
          double tm = grid_.time(mdx);
          while (k < K && dz.points[k] <= tm) {
            acc.add(dz.weights[k] * m.eta_law.ccdf(tA - dz.points[k]));
            ++k;
          }
          PA[mdx] = acc.value();
        }
      }
      marg_i_[A] = PA[A];
      mean_[A] = prof[A] * PA[A];
      for (std::size_t j = 0; j < n_; ++j) {
        std::size_t mn = std::min(A, j);
        // entries whose max index is A
        if (j <= A) {
          double joint = PA[j];
          ll_[at(A, j)] = prof[A] * prof[j] * joint;
          ll_[at(j, A)] = ll_[at(A, j)];
          li_[at(A, j)] = prof[A] * joint;
          li_[at(j, A)] = prof[j] * joint;
          pii_[at(A, j)] = joint;
          pii_[at(j, A)] = joint;
          pee_[at(A, j)] = marg_e_[A];
          pee_[at(j, A)] = marg_e_[A];
        }
        // E[lambda(t_A) 1{zeta > t_j}] and P(E at t_i, I at t_A)
        le_[at(A, j)] = prof[A] * (PA[A] - PA[mn]);
        pei_[at(j, A)] = PA[A] - PA[mn];
      }
    }
  }

  void fill_bump(const InfectivityModel& m) {
    auto d = DiscretizedLaw::from(m.chi_law, 1024);
    const std::size_t K = d.points.size();
    std::vector<double> gt(n_ * K, 0.0);   // g(t_i, x_k), zero for x_k <= t_i
    std::vector<double> sa(n_ * (K + 1));  // suffix sums of w * gt per row
    std::vector<double> ws(K + 1, 0.0);    // suffix weights
    std::vector<std::size_t> kidx(n_);     // first atom strictly above t_j
    for (std::size_t k = K; k-- > 0;) ws[k] = ws[k + 1] + d.weights[k];
    for (std::size_t i = 0; i < n_; ++i) {
      double t = grid_.time(i);
      for (std::size_t k = 0; k < K; ++k) {
        double x = d.points[k];
        if (x > t) gt[i * K + k] = 4.0 * m.amplitude * t * (x - t) / (x * x);
      }
      sa[i * (K + 1) + K] = 0.0;
      for (std::size_t k = K; k-- > 0;)
        sa[i * (K + 1) + k] = sa[i * (K + 1) + k + 1] + d.weights[k] * gt[i * K + k];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      double tj = grid_.time(j);
      kidx[j] = static_cast<std::size_t>(
          std::upper_bound(d.points.begin(), d.points.end(), tj) - d.points.begin());
    }
    for (std::size_t i = 0; i < n_; ++i) {
      mean_[i] = sa[i * (K + 1)];
      marg_e_[i] = 0.0;
      marg_i_[i] = ws[kidx[i]];
    }
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        CompensatedSum acc;
        for (std::size_t k = kidx[i]; k < K; ++k)
          acc.add(d.weights[k] * gt[i * K + k] * gt[j * K + k]);
        ll_[at(i, j)] = acc.value();
        ll_[at(j, i)] = acc.value();
        pii_[at(i, j)] = ws[kidx[i]];
        pii_[at(j, i)] = ws[kidx[i]];
      }
      for (std::size_t j = 0; j < n_; ++j) li_[at(i, j)] = sa[i * (K + 1) + kidx[j]];
    }
  }

  // Aged models with a constant active profile: everything reduces to the
  // joint law of (zeta, chi), counted exactly at the node thresholds.
  void fill_aged_histogram(const InfectivityModel& m, std::size_t mc_samples) {
    auto atoms = detail::mc_atoms(m, mc_samples, 0xa6edu);
    const double amp = m.lambda_star;  // constant active value
    const std::size_t nb = n_ + 1;
    std::vector<double> cnt(nb * nb, 0.0);
    for (const auto& a : atoms) {
      std::size_t iz = node_at_or_after(a.zeta, grid_);
      std::size_t ix = node_at_or_after(a.chi, grid_);
      cnt[iz * nb + ix] += a.w;
    }
    // C2[m][M] = P(zeta <= t_m, chi > t_M); prefix over zeta, suffix over chi.
    std::vector<double> c2(nb * nb, 0.0);
    for (std::size_t iz = 0; iz < nb; ++iz)
      for (std::size_t ix = 0; ix < nb; ++ix) {
        double v = cnt[iz * nb + ix];
        if (iz > 0) v += c2[(iz - 1) * nb + ix];
        c2[iz * nb + ix] = v;
      }
    for (std::size_t iz = 0; iz < nb; ++iz) {
      double suffix = 0.0;
      for (std::size_t ix = nb; ix-- > 0;) {
        double here = c2[iz * nb + ix];
        c2[iz * nb + ix] = suffix;
        suffix += here;
      }
    }
    auto C2 = [&](std::size_t mdx, std::size_t Mdx) { return c2[mdx * nb + Mdx]; };
    std::vector<double> pz(n_);  // P(zeta <= t_m); chi > 0 a.s. so C2(m, 0) is the marginal
    for (std::size_t i = 0; i < n_; ++i) pz[i] = C2(i, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      marg_e_[i] = 1.0 - pz[i];
      marg_i_[i] = C2(i, i);
      mean_[i] = amp * marg_i_[i];
    }
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        std::size_t mn = std::min(i, j), mx = std::max(i, j);
        double joint = C2(mn, mx);
        ll_[at(i, j)] = amp * amp * joint;
        li_[at(i, j)] = amp * joint;
        pii_[at(i, j)] = joint;
        pee_[at(i, j)] = 1.0 - pz[mx];
        if (i < j) pei_[at(i, j)] = C2(j, j) - C2(i, j);
        if (j < i) le_[at(i, j)] = amp * (C2(i, i) - C2(j, i));
      }
    }
    mc_se_ = amp * 0.5 / std::sqrt(static_cast<double>(mc_samples));
  }

  // Aged models with time-varying profiles: direct Monte Carlo accumulation
  // over each sample's support window.
  void fill_aged_direct(const InfectivityModel& m, std::size_t mc_samples) {
    std::size_t budget = std::clamp<std::size_t>(
        static_cast<std::size_t>(4e9 / static_cast<double>(n_ * n_ + 1)), 2'000, 20'000);
    budget = std::min(budget, mc_samples);
    auto atoms = detail::mc_atoms(m, budget, 0xa6edu);
    const std::size_t nb = n_ + 1;
    std::vector<double> cnt(nb * nb, 0.0);
    std::vector<double> dli(n_ * nb, 0.0), dle(n_ * nb, 0.0);
    std::vector<double> vals(n_);
    for (const auto& a : atoms) {
      std::size_t iz = node_at_or_after(a.zeta, grid_);
      std::size_t ix = node_at_or_after(a.chi, grid_);
      cnt[iz * nb + ix] += a.w;
      std::size_t lo = iz, hi = std::min(ix, n_);
      for (std::size_t k = lo; k < hi; ++k) vals[k] = detail::atom_value(m, a, grid_.time(k));
      for (std::size_t k = lo; k < hi; ++k) {
        double wv = a.w * vals[k];
        mean_[k] += wv;
        dli[k * nb + iz] += wv;
        dli[k * nb + std::min(ix, n_)] -= wv;
        dle[k * nb + iz] += wv;
        for (std::size_t k2 = lo; k2 < hi; ++k2) ll_[at(k, k2)] += wv * vals[k2];
      }
    }
    for (std::size_t i = 0; i < n_; ++i) {
      double run = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        run += dli[i * nb + j];
        li_[at(i, j)] = run;
      }
      // le(i, j) collects the contributions with zeta threshold above j.
      double suffix = 0.0;
      for (std::size_t j = n_; j-- > 0;) {
        suffix += dle[i * nb + j + 1];
        le_[at(i, j)] = suffix;
      }
    }
    // Region joints from the same samples (exact at node thresholds).
    std::vector<double> c2(nb * nb, 0.0);
    for (std::size_t iz = 0; iz < nb; ++iz)
      for (std::size_t ix = 0; ix < nb; ++ix) {
        double v = cnt[iz * nb + ix];
        if (iz > 0) v += c2[(iz - 1) * nb + ix];
        c2[iz * nb + ix] = v;
      }
    for (std::size_t iz = 0; iz < nb; ++iz) {
      double suffix = 0.0;
      for (std::size_t ix = nb; ix-- > 0;) {
        double here = c2[iz * nb + ix];
        c2[iz * nb + ix] = suffix;
        suffix += here;
      }
    }
    auto C2 = [&](std::size_t mdx, std::size_t Mdx) { return c2[mdx * nb + Mdx]; };
    for (std::size_t i = 0; i < n_; ++i) {
      marg_e_[i] = 1.0 - C2(i, 0);
      marg_i_[i] = C2(i, i);
    }
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        std::size_t mn = std::min(i, j), mx = std::max(i, j);
        pii_[at(i, j)] = C2(mn, mx);
        pee_[at(i, j)] = 1.0 - C2(mx, 0);
        if (i < j) pei_[at(i, j)] = C2(j, j) - C2(i, j);
      }
    mc_se_ = m.lambda_star * 0.5 / std::sqrt(static_cast<double>(budget));
  }
};

}  // namespace varinf
