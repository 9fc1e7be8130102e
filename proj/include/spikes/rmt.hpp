#pragma once

// Deterministic random-matrix quantities for the MP law with indexes (y, H).
//
//   ψ(α)   = α + yα ∫ t/(α − t) dH(t),            α ∉ Γ_H, α ≠ 0
//   ψ'(α)  = 1 − y ∫ t²/(α − t)² dH(t)
//
// A point λ lies outside the LSD support exactly when λ = ψ(α) for some α
// with α ∉ Γ_H, α ≠ 0 and ψ'(α) > 0. lsd_support() uses that
// characterization directly.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "spikes/error.hpp"
#include "spikes/psd.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

namespace detail {

inline void check_psi_domain(const Psd& h, double alpha) {
  if (alpha == 0.0 || !std::isfinite(alpha)) throw DomainError("psi is undefined at alpha = 0");
  if (h.in_support(alpha))
    throw DomainError("psi is undefined inside the PSD support (alpha = " + std::to_string(alpha) + ")");
}

// Returns (∫ t/(α−t) dH, ∫ t²/(α−t)² dH).
inline std::pair<double, double> psi_integrals(const Psd& h, double alpha, bool need_first, bool need_second) {
  return std::visit(
      [&](const auto& m) -> std::pair<double, double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          const double r = m.sigma2 / (alpha - m.sigma2);
          return {r, r * r};
        } else if constexpr (std::is_same_v<T, Discrete>) {
          double s1 = 0.0;
          double s2 = 0.0;
          for (std::size_t i = 0; i < m.atoms.size(); ++i) {
            const double r = m.atoms[i] / (alpha - m.atoms[i]);
            s1 += m.weights[i] * r;
            s2 += m.weights[i] * r * r;
          }
          return {s1, s2};
        } else {
          const double s = alpha * m.rate;
          const double cutoff = h.standard_cutoff();
          double s1 = 0.0;
          double s2 = 0.0;
          if (need_first)
            s1 = truncated_gamma_expect(m.shape, cutoff, m.truncation_quantile, s,
                                        [](double x, double gap) { return x / gap; });
          if (need_second)
            s2 = truncated_gamma_expect(m.shape, cutoff, m.truncation_quantile, s, [](double x, double gap) {
              const double r = x / gap;
              return r * r;
            });
          return {s1, s2};
        }
      },
      h.model());
}

} // namespace detail

inline double psi(const Psd& h, double y, double alpha) {
  detail::check_psi_domain(h, alpha);
  const auto [s1, s2] = detail::psi_integrals(h, alpha, true, false);
  (void)s2;
  return alpha + y * alpha * s1;
}

inline double psi_derivative(const Psd& h, double y, double alpha) {
  detail::check_psi_domain(h, alpha);
  const auto [s1, s2] = detail::psi_integrals(h, alpha, false, true);
  (void)s1;
  return 1.0 - y * s2;
}

struct PsiCurve {
  std::vector<double> alpha_grid;
  std::vector<double> psi_values; // NaN where ψ is undefined
  std::vector<bool> admissible;   // α ∉ Γ_H, α ≠ 0 and ψ'(α) > 0
};

inline PsiCurve psi_curve(const Psd& h, double y, std::span<const double> grid) {
  PsiCurve out;
  out.alpha_grid.assign(grid.begin(), grid.end());
  for (double a : grid) {
    if (a == 0.0 || h.in_support(a)) {
      out.psi_values.push_back(std::numeric_limits<double>::quiet_NaN());
      out.admissible.push_back(false);
      continue;
    }
    out.psi_values.push_back(psi(h, y, a));
    out.admissible.push_back(psi_derivative(h, y, a) > 0.0);
  }
  return out;
}

struct Interval {
  double lo;
  double hi;
};

struct SupportIntervals {
  std::vector<Interval> intervals; // ascending; [0, 0] first when zero_atom
  bool zero_atom = false;          // LSD has an atom at zero (y > 1 or H({0}) > 0)
  double upper_edge = 0.0;
  double upper_critical_alpha = std::numeric_limits<double>::quiet_NaN(); // argmin of ψ above Γ_H

  /// Lower edge of the continuous part.
  double lower_edge() const {
    const std::size_t k = zero_atom ? 1 : 0;
    return k < intervals.size() ? intervals[k].lo : 0.0;
  }
};

struct SupportScanOptions {
  int grid_points = 4096;
  double alpha_tol = 1e-10;
};

/// Support of F_{y,H} from the ψ'-sign structure on each component of Γ_H's complement.
inline SupportIntervals lsd_support(const Psd& h, double y, const SupportScanOptions& opt = {}) {
  if (!(y > 0.0) || !std::isfinite(y)) throw InvalidArgument("aspect ratio must be positive");
  if (!h.bounded()) throw DomainError("LSD support requires a PSD with bounded support");

  constexpr double inf = std::numeric_limits<double>::infinity();
  const double top = h.upper_bound();
  const double scale = std::max(top, 1e-300);

  // Boundary points of the α-domain: atoms (or the gamma support) and zero.
  std::vector<std::pair<double, double>> components;
  if (const auto* g = h.get_if<TruncatedGamma>()) {
    (void)g;
    components = {{-inf, 0.0}, {top, inf}};
  } else {
    std::vector<double> pts;
    if (const auto* pm = h.get_if<PointMass>()) pts = {pm->sigma2};
    else pts = h.get_if<Discrete>()->atoms;
    pts.push_back(0.0);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    components.push_back({-inf, pts.front()});
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) components.push_back({pts[i], pts[i + 1]});
    components.push_back({pts.back(), inf});
  }

  auto dpsi = [&](double a) { return psi_derivative(h, y, a); };
  auto refine = [&](double a, double b) {
    // ψ' changes sign between a and b.
    const bool sa = dpsi(a) > 0.0;
    for (int it = 0; it < 400 && std::fabs(b - a) > opt.alpha_tol * std::max(1.0, std::fabs(a)); ++it) {
      const double m = 0.5 * (a + b);
      if ((dpsi(m) > 0.0) == sa) a = m;
      else b = m;
    }
    return 0.5 * (a + b);
  };
  // Limit of ψ at a finite domain endpoint reached while ψ' > 0. Only α → 0
  // can be reached that way (ψ → 0); poles and the gamma edge have ψ' → −∞.
  auto endpoint_value = [&](double e, double nearest) { return e == 0.0 ? 0.0 : psi(h, y, nearest); };

  std::vector<Interval> gaps;
  SupportIntervals out;
  const int npts = opt.grid_points;
  for (const auto& [lo, hi] : components) {
    std::vector<double> grid;
    grid.reserve(npts);
    if (std::isinf(lo) || std::isinf(hi)) {
      const double anchor = std::isinf(lo) ? hi : lo;
      const double sgn = std::isinf(lo) ? -1.0 : 1.0;
      const double l0 = std::log(1e-9 * scale);
      const double l1 = std::log(1e7 * scale);
      for (int i = 0; i < npts; ++i) {
        const double off = std::exp(l0 + (l1 - l0) * i / (npts - 1));
        grid.push_back(anchor + sgn * off);
      }
      if (sgn < 0.0) std::reverse(grid.begin(), grid.end());
    } else {
      const double width = hi - lo;
      const int half = npts / 2;
      const double l0 = std::log(1e-10 * width);
      const double l1 = std::log(0.5 * width);
      for (int i = 0; i < half; ++i) grid.push_back(lo + std::exp(l0 + (l1 - l0) * i / (half - 1)));
      for (int i = half - 1; i >= 0; --i) grid.push_back(hi - std::exp(l0 + (l1 - l0) * i / (half - 1)));
    }
    grid.erase(std::remove_if(grid.begin(), grid.end(),
                              [&](double a) { return a <= lo || a >= hi || a == 0.0 || h.in_support(a); }),
               grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.empty()) continue;

    std::vector<char> pos(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) pos[i] = dpsi(grid[i]) > 0.0;

    std::size_t i = 0;
    while (i < grid.size()) {
      if (!pos[i]) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < grid.size() && pos[j + 1]) ++j;
      double gap_lo = 0.0;
      double gap_hi = 0.0;
      double alpha_left = grid[i];
      if (i == 0) gap_lo = std::isinf(lo) ? -inf : endpoint_value(lo, grid[i]);
      else {
        alpha_left = refine(grid[i], grid[i - 1]);
        gap_lo = psi(h, y, alpha_left);
      }
      if (j + 1 == grid.size()) gap_hi = std::isinf(hi) ? inf : endpoint_value(hi, grid[j]);
      else gap_hi = psi(h, y, refine(grid[j], grid[j + 1]));
      if (std::isinf(hi) && lo >= top && j + 1 == grid.size()) out.upper_critical_alpha = alpha_left;
      gaps.push_back({gap_lo, gap_hi});
      i = j + 1;
    }
  }

  std::sort(gaps.begin(), gaps.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  double cur = -inf;
  std::vector<Interval> support;
  for (const auto& g : gaps) {
    if (g.lo > cur) support.push_back({cur, g.lo});
    cur = std::max(cur, g.hi);
  }
  if (cur < inf) support.push_back({cur, inf});

  std::vector<Interval> clipped;
  for (auto iv : support) {
    if (iv.hi < 0.0) continue;
    iv.lo = std::max(iv.lo, 0.0);
    if (iv.hi <= iv.lo) continue; // isolated points such as ψ(0±) = 0
    clipped.push_back(iv);
  }

  out.zero_atom = y > 1.0 || h.zero_mass() > 0.0;
  if (out.zero_atom) out.intervals.push_back({0.0, 0.0});
  out.intervals.insert(out.intervals.end(), clipped.begin(), clipped.end());
  out.upper_edge = out.intervals.empty() ? 0.0 : out.intervals.back().hi;
  return out;
}

inline constexpr int kMaxPartitionOrder = 12;

/// All (i₁, …, i_j) with j = i₁ + 2 i₂ + … + j i_j.
inline std::vector<std::vector<int>> enumerate_partitions(int j) {
  if (j < 1) throw InvalidArgument("partition order must be >= 1");
  if (j > kMaxPartitionOrder) throw CapExceeded("partition order above " + std::to_string(kMaxPartitionOrder));
  std::vector<std::vector<int>> out;
  std::vector<int> counts(j, 0);
  // Fill counts for part sizes j, j−1, …, 1.
  auto rec = [&](auto&& self, int part, int remaining) -> void {
    if (part == 1) {
      counts[0] = remaining;
      out.push_back(counts);
      counts[0] = 0;
      return;
    }
    for (int c = remaining / part; c >= 0; --c) {
      counts[part - 1] = c;
      self(self, part - 1, remaining - c * part);
    }
    counts[part - 1] = 0;
  };
  rec(rec, j, j);
  return out;
}

/// α_j of F_{y,H} from the PSD moments β₁, …, β_j.
inline double lsd_moment_from_betas(std::span<const double> betas, double y, int j) {
  if (static_cast<int>(betas.size()) < j) throw InvalidArgument("need j PSD moments");
  double fact_j = 1.0;
  for (int i = 2; i <= j; ++i) fact_j *= i;
  auto factorial = [](int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
  };
  double total = 0.0;
  for (const auto& p : enumerate_partitions(j)) {
    int parts = 0;
    double term = 1.0;
    double denom = 1.0;
    for (int l = 0; l < j; ++l) {
      parts += p[l];
      term *= std::pow(betas[l], p[l]);
      denom *= factorial(p[l]);
    }
    denom *= factorial(j + 1 - parts);
    total += std::pow(y, parts - 1) * term * fact_j / denom;
  }
  return total;
}

inline double lsd_moment(const Psd& h, double y, int j) {
  if (j < 1) throw InvalidArgument("moment order must be >= 1");
  if (j > kMaxPartitionOrder) throw CapExceeded("moment order above " + std::to_string(kMaxPartitionOrder));
  std::vector<double> betas(j);
  for (int l = 1; l <= j; ++l) betas[l - 1] = moment(h, l);
  return lsd_moment_from_betas(betas, y, j);
}

/// s̄_n(u) = −(1 − d/n)/u + (1/n) Σ_{i≤d} 1/(λ̂_i − u), structural zeros included.
inline double companion_stieltjes(const EigenSpectrum& spec, double u) {
  if (u == 0.0) throw PoleError("companion Stieltjes transform has a pole at 0");
  const double n = static_cast<double>(spec.n());
  double sum = 0.0;
  for (double l : spec.values()) {
    if (l == u) throw PoleError("companion Stieltjes transform has a pole at an eigenvalue");
    sum += 1.0 / (l - u);
  }
  // Structural zeros fold into the first term: −(1 − r/n)/u with r stored values.
  const double r = static_cast<double>(spec.size());
  return -(1.0 - r / n) / u + sum / n;
}

inline double companion_stieltjes_derivative(const EigenSpectrum& spec, double u) {
  const double n = static_cast<double>(spec.n());
  const double r = static_cast<double>(spec.size());
  double sum = 0.0;
  for (double l : spec.values()) sum += 1.0 / ((l - u) * (l - u));
  return (1.0 - r / n) / (u * u) + sum / n;
}

/// ψ̂_n(α) = s̄_n^{-1}(−1/α) on the branch (λ̂₁, ∞).
inline double invert_companion(const EigenSpectrum& spec, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw NoRootError("inversion needs a finite alpha > 0");
  const double target = -1.0 / alpha;
  auto f = [&](double u) { return companion_stieltjes(spec, u) - target; };

  const double top = spec.empty() ? 0.0 : spec.values().front();
  double mean = 0.0;
  for (double l : spec.values()) mean += l;
  mean /= static_cast<double>(spec.d());

  double hi = top + alpha * (1.0 + spec.aspect_ratio() * mean);
  double fhi = f(hi);
  for (int it = 0; it < 200 && fhi < 0.0; ++it) {
    hi = top + 2.0 * (hi - top);
    fhi = f(hi);
  }
  if (!(fhi >= 0.0)) throw NoRootError("no upper bracket for the companion inversion");
  if (fhi == 0.0) return hi;

  double lo = top + 0.5 * (hi - top);
  double flo = f(lo);
  for (int it = 0; it < 2000 && flo >= 0.0; ++it) {
    lo = top + 0.5 * (lo - top);
    if (lo == top) break;
    flo = f(lo);
  }
  if (!(flo < 0.0)) throw NoRootError("-1/alpha is not attained above the largest eigenvalue");

  std::uintmax_t iters = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(52);
  auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  double u = std::fabs(f(a)) < std::fabs(f(b)) ? a : b;
  // Newton polish inside the bracket.
  for (int it = 0; it < 3; ++it) {
    const double fu = f(u);
    const double next = u - fu / companion_stieltjes_derivative(spec, u);
    if (!(next > top) || std::fabs(f(next)) >= std::fabs(fu)) break;
    u = next;
  }
  const double resid = std::fabs(f(u));
  if (resid > 1e-12 * std::max(1.0, 1.0 / alpha) && std::fabs(b - a) > 4 * std::numeric_limits<double>::epsilon() * u)
    throw NoRootError("companion inversion did not converge");
  return u;
}

/// Classical MP density for H = δ_{σ²}; the zero atom for y > 1 is excluded.
inline double mp_density(double sigma2, double y, double x) {
  if (!(sigma2 > 0.0) || !(y > 0.0)) throw InvalidArgument("mp_density needs sigma2 > 0 and y > 0");
  const double sy = std::sqrt(y);
  const double a = sigma2 * (1.0 - sy) * (1.0 - sy);
  const double b = sigma2 * (1.0 + sy) * (1.0 + sy);
  if (!(x > a && x < b) || x <= 0.0) return 0.0;
  return std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * sigma2 * y * x);
}

/// Mass of the MP atom at zero, max(0, 1 − 1/y).
inline double mp_zero_mass(double y) { return y > 1.0 ? 1.0 - 1.0 / y : 0.0; }

} // namespace spikes
