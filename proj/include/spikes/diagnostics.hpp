#pragma once

// Goodness-of-fit tooling for a fitted noise PSD: psi envelopes, ESD
// histograms and LSD-versus-ESD support comparisons.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "spikes/error.hpp"
#include "spikes/parallel.hpp"
#include "spikes/psd.hpp"
#include "spikes/rmt.hpp"
#include "spikes/simulate.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

inline constexpr std::size_t kDefaultEnvelopeReplicates = 100;
inline constexpr std::size_t kMinEnvelopeReplicates = 20;
inline constexpr std::size_t kDefaultEnvelopeGridPoints = 64;
inline constexpr double kEnvelopePassCoverage = 0.9;
// Substream tag for envelope replicates, disjoint from sequential-test steps.
inline constexpr std::uint64_t kEnvelopeStream = 0xE5E1'0000'0000'0000ULL;

struct EnvelopeBundle {
  std::vector<double> alpha_grid;
  std::vector<double> theoretical_psi;
  std::vector<std::vector<double>> envelopes; // Q × grid; NaN where no root
  std::vector<double> band_lower;
  std::vector<double> band_upper;
  std::vector<double> data_psi; // NaN where no root
  std::vector<bool> inside;
  std::size_t evaluated = 0; // grid points with a data value and a nonempty band
  double coverage_fraction = 0.0;
  Psd psd = Psd::point_mass(1.0);
  std::size_t d = 0;
  std::size_t n = 0;
  std::size_t Q = 0;
  std::uint64_t seed = 0;

  /// Reporting convention only: coverage of at least kEnvelopePassCoverage.
  bool pass() const { return evaluated > 0 && coverage_fraction >= kEnvelopePassCoverage; }
};

/// 64 log-spaced α from 1.05 × max(upper end of Γ_H, critical α) to
/// 20 × the upper end of Γ_H, so every point has ψ' > 0.
inline std::vector<double> default_alpha_grid(const Psd& h, double y, std::size_t points = kDefaultEnvelopeGridPoints) {
  if (points < 2) throw InvalidArgument("alpha grid needs at least 2 points");
  const double top = h.upper_bound();
  const SupportIntervals sup = lsd_support(h, y);
  double start = 1.05 * top;
  if (std::isfinite(sup.upper_critical_alpha)) start = std::max(start, 1.05 * sup.upper_critical_alpha);
  double stop = 20.0 * top;
  if (!(stop > start)) stop = 20.0 * start;
  std::vector<double> grid(points);
  const double ls = std::log(start);
  const double step = (std::log(stop) - ls) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = std::exp(ls + step * static_cast<double>(i));
  grid.back() = stop;
  return grid;
}

namespace detail {

inline std::vector<double> empirical_psi(const EigenSpectrum& spec, const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      out[i] = invert_companion(spec, grid[i]);
    } catch (const NoRootError&) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

} // namespace detail

/// Compares ψ̂_n of the data against Q curves ψ̂_n^q simulated under H_hat at
/// the spectrum's (d, n). Replicate q uses substream (seed, kEnvelopeStream, q).
inline EnvelopeBundle psi_envelope(const EigenSpectrum& spec, const Psd& h_hat, std::size_t Q,
                                   std::vector<double> alpha_grid, std::uint64_t seed, unsigned threads = 0) {
  if (Q < kMinEnvelopeReplicates)
    throw InvalidArgument("psi_envelope needs Q >= " + std::to_string(kMinEnvelopeReplicates));
  if (spec.empty()) throw EmptyTail("spectrum has no eigenvalues");
  if (spec.n() < 2) throw InvalidArgument("psi_envelope needs n >= 2");
  const double y = spec.aspect_ratio();
  if (alpha_grid.empty()) alpha_grid = default_alpha_grid(h_hat, y);
  if (!std::is_sorted(alpha_grid.begin(), alpha_grid.end())) throw InvalidArgument("alpha grid must be ascending");
  for (double a : alpha_grid) {
    if (!(a > 0.0) || h_hat.in_support(a) || !(psi_derivative(h_hat, y, a) > 0.0))
      throw DomainError("alpha " + std::to_string(a) + " is not admissible for the PSD");
  }

  EnvelopeBundle out;
  out.alpha_grid = alpha_grid;
  out.psd = h_hat;
  out.d = spec.d();
  out.n = spec.n();
  out.Q = Q;
  out.seed = seed;
  out.theoretical_psi.reserve(alpha_grid.size());
  for (double a : alpha_grid) out.theoretical_psi.push_back(psi(h_hat, y, a));

  out.envelopes.resize(Q);
  parallel_for(Q, resolve_threads(threads), [&](std::size_t q, unsigned) {
    Rng rng = Rng::substream(seed, kEnvelopeStream, q);
    const EigenSpectrum sim = noise_spectrum(h_hat, spec.d(), spec.n(), rng, spec.centered());
    out.envelopes[q] = detail::empirical_psi(sim, alpha_grid);
  });
  out.data_psi = detail::empirical_psi(spec, alpha_grid);

  const std::size_t g = alpha_grid.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.band_lower.assign(g, nan);
  out.band_upper.assign(g, nan);
  out.inside.assign(g, false);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < g; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& curve : out.envelopes) {
      if (std::isnan(curve[i])) continue;
      lo = std::min(lo, curve[i]);
      hi = std::max(hi, curve[i]);
    }
    if (!(lo <= hi)) continue;
    out.band_lower[i] = lo;
    out.band_upper[i] = hi;
    if (std::isnan(out.data_psi[i])) continue;
    ++out.evaluated;
    out.inside[i] = out.data_psi[i] >= lo && out.data_psi[i] <= hi;
    covered += out.inside[i];
  }
  out.coverage_fraction = out.evaluated ? static_cast<double>(covered) / static_cast<double>(out.evaluated) : 0.0;
  return out;
}

struct EsdHistogram {
  std::vector<double> edges; // bins + 1
  std::vector<std::size_t> counts;
  std::vector<double> density; // counts / (total × width)
  std::size_t total = 0;
  std::size_t drop_top = 0;
};

/// Histogram of the stored eigenvalues after removing the drop_top largest.
inline EsdHistogram esd_histogram(const EigenSpectrum& spec, std::size_t drop_top, std::size_t bins) {
  if (bins < 1) throw InvalidArgument("histogram needs at least one bin");
  if (drop_top >= spec.size()) throw EmptyTail("no eigenvalues remain after dropping " + std::to_string(drop_top));
  const auto first = spec.values().begin() + static_cast<std::ptrdiff_t>(drop_top);
  const std::vector<double> tail(first, spec.values().end());
  double lo = tail.back();
  double hi = tail.front();
  if (!(hi > lo)) {
    const double pad = 0.5 * std::max(std::fabs(lo), 1e-12);
    lo -= pad;
    hi += pad;
  }
  EsdHistogram out;
  out.drop_top = drop_top;
  out.total = tail.size();
  out.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) out.edges[i] = lo + width * static_cast<double>(i);
  out.edges.back() = hi;
  out.counts.assign(bins, 0);
  for (double v : tail) {
    auto k = static_cast<std::size_t>((v - lo) / width);
    out.counts[std::min(k, bins - 1)] += 1;
  }
  out.density.resize(bins);
  for (std::size_t i = 0; i < bins; ++i)
    out.density[i] = static_cast<double>(out.counts[i]) / (static_cast<double>(out.total) * width);
  return out;
}

struct SupportComparison {
  Interval empirical{};
  Interval theoretical{};
  std::optional<Interval> overlap;
  double lsd_upper_edge = 0.0;
  double simulated_upper = 0.0; // (1 − alpha_tw)-quantile of the largest noise eigenvalue
  double alpha_tw = 0.0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  std::size_t drop_top = 0;
};

/// Empirical support of the tail after drop_top versus the LSD support of
/// H_hat at the tail's geometry, extended at the top to the simulated
/// (1 − alpha_tw)-quantile of the largest noise eigenvalue.
inline SupportComparison support_comparison(const EigenSpectrum& spec, const Psd& h_hat, std::size_t drop_top,
                                            double alpha_tw, std::size_t B, std::uint64_t seed,
                                            unsigned threads = 0) {
  const EigenSpectrum tail = spec.drop_top(drop_top);
  SupportComparison out;
  out.drop_top = drop_top;
  out.alpha_tw = alpha_tw;
  out.B = B;
  out.seed = seed;
  out.empirical = {tail.values().back(), tail.values().front()};

  const SupportIntervals lsd = lsd_support(h_hat, tail.aspect_ratio());
  out.lsd_upper_edge = lsd.upper_edge;
  ThresholdOptions topt;
  topt.stream = drop_top;
  topt.threads = threads;
  out.simulated_upper = threshold(h_hat, tail.d(), tail.n(), alpha_tw, B, seed, topt).s_alpha;
  out.theoretical = {lsd.lower_edge(), std::max(lsd.upper_edge, out.simulated_upper)};

  const double lo = std::max(out.empirical.lo, out.theoretical.lo);
  const double hi = std::min(out.empirical.hi, out.theoretical.hi);
  if (lo <= hi) out.overlap = Interval{lo, hi};
  return out;
}

} // namespace spikes
