#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace varinf {

// Uniform time grid {0, step, 2*step, ..., (nodes-1)*step}.
struct Grid {
  double step = 0.01;
  std::size_t nodes = 2;

  double time(std::size_t i) const { return step * static_cast<double>(i); }
  double horizon() const { return time(nodes - 1); }

  static Grid over(double horizon, double step) {
    if (!(step > 0.0) || !(horizon > 0.0))
      throw std::invalid_argument("grid: horizon and step must be positive");
    auto n = static_cast<std::size_t>(std::llround(horizon / step));
    if (n < 1) n = 1;
    return Grid{step, n + 1};
  }

  // Node index of absolute time t; t must sit on the grid (up to rounding).
  std::size_t index_of(double t) const {
    auto i = static_cast<std::size_t>(std::llround(t / step));
    if (i >= nodes || std::abs(time(i) - t) > 1e-9 * (1.0 + std::abs(t)))
      throw std::invalid_argument("grid: time off-grid");
    return i;
  }

  // Is `coarse` a node-subset of this grid?  Returns the stride, or 0.
  std::size_t stride_of(const Grid& coarse) const {
    double r = coarse.step / step;
    auto k = static_cast<std::size_t>(std::llround(r));
    if (k == 0 || std::abs(r - static_cast<double>(k)) > 1e-9) return 0;
    if ((coarse.nodes - 1) * k > nodes - 1) return 0;
    return k;
  }

  bool operator==(const Grid& o) const = default;
};

// Smallest grid node index k with time(k) >= u (robust against the usual
// floating-point noise around exact multiples); grid.nodes when u is beyond
// the horizon.
inline std::size_t node_at_or_after(double u, const Grid& g) {
  if (u <= 0.0) return 0;
  auto k = static_cast<long long>(std::ceil(u / g.step - 1e-9));
  if (k < 0) k = 0;
  auto ku = static_cast<std::size_t>(k);
  while (ku < g.nodes && g.time(ku) < u) ++ku;
  while (ku > 0 && g.time(ku - 1) >= u) --ku;
  return std::min(ku, g.nodes);
}

// --- seeding -------------------------------------------------------------
//
// All randomness flows from 64-bit seeds.  Substreams are derived with a
// splitmix64 mix of (seed, stream id); replication r of an experiment with
// master seed s uses engine_for(s, r).

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x9e3779b97f4a7c15ull));
}

using Rng = std::mt19937_64;

inline Rng engine_for(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Strictly positive uniform, safe for log().
inline double uniform01_pos(Rng& rng) {
  double u;
  do {
    u = uniform01(rng);
  } while (u <= 0.0);
  return u;
}

inline double draw_exponential(Rng& rng, double rate) {
  return -std::log(uniform01_pos(rng)) / rate;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; one value per call keeps substreams simple.
  double u1 = uniform01_pos(rng);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

// --- numerics ------------------------------------------------------------

// Neumaier compensated sum for long accumulations.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Regularized lower incomplete gamma P(a,x); series/continued-fraction split.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz continued fraction for Q(a,x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-15) break;
  }
  double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

// (1 - exp(-x)) / x, stable near zero.
inline double expm1_ratio(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

// --- formatting ----------------------------------------------------------

// Shortest round-trip decimal representation (locale-free).
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// --- running statistics --------------------------------------------------

struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double v) {
    ++n;
    double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double se_of_mean() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
  }
};

// --- parallel fan-out ----------------------------------------------------
//
// Runs fn(i) for i in [0, count) across worker threads.  Results must be
// written to per-index slots by the callee so aggregation stays
// order-independent and deterministic.

template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned max_threads = 0) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (max_threads != 0 && max_threads < hw) hw = max_threads;
  if (hw <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(hw);
  std::atomic<std::size_t> next{0};
  for (unsigned w = 0; w < hw; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace varinf
