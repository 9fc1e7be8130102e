#pragma once

// Monte-Carlo engines: the largest-noise-eigenvalue threshold, full noise
// spectra for envelopes, and synthetic generalized-spike data sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "spikes/error.hpp"
#include "spikes/parallel.hpp"
#include "spikes/psd.hpp"
#include "spikes/rng.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

inline constexpr std::size_t kDefaultThresholdReplications = 1000;
inline constexpr std::size_t kMinThresholdReplications = 100;

namespace detail {

// Splits H into a unit-scale law and a factor so that draws from H equal
// factor × draws from the unit law. Keeps thresholds exactly equivariant
// under rescaling of H.
inline std::pair<Psd, double> unit_scale(const Psd& h) {
  if (const auto* pm = h.get_if<PointMass>()) return {Psd::point_mass(1.0), pm->sigma2};
  if (const auto* g = h.get_if<TruncatedGamma>())
    return {Psd::truncated_gamma(g->shape, 1.0, g->truncation_quantile), 1.0 / g->rate};
  return {h, 1.0};
}

struct NoiseWorkspace {
  std::vector<double> diag;
  Eigen::MatrixXd w;
  Eigen::MatrixXd gram;
};

// W = T^{1/2} Z with diag(T) ~ H (i.i.d.) and Z standard normal, column-major draws.
inline void draw_noise(const Psd& unit, std::size_t d, std::size_t n, Rng& rng, NoiseWorkspace& ws) {
  ws.diag.resize(d);
  sample_into(unit, ws.diag, rng);
  for (auto& t : ws.diag) t = std::sqrt(t);
  ws.w.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    double* col = ws.w.col(static_cast<Eigen::Index>(j)).data();
    for (std::size_t i = 0; i < d; ++i) col[i] = ws.diag[i] * rng.normal();
  }
}

} // namespace detail

/// λ̂₁ of (1/n) T^{1/2} Z Zᵀ T^{1/2} for one draw of T and Z.
inline double largest_noise_eigenvalue(const Psd& h, std::size_t d, std::size_t n, Rng& rng,
                                       detail::NoiseWorkspace& ws) {
  if (d < 2 || n < 2) throw InvalidArgument("largest_noise_eigenvalue needs d, n >= 2");
  const auto [unit, factor] = detail::unit_scale(h);
  detail::draw_noise(unit, d, n, rng, ws);
  detail::small_gram(ws.w, ws.gram);
  return factor * top_eigenvalue(ws.gram);
}

inline double largest_noise_eigenvalue(const Psd& h, std::size_t d, std::size_t n, Rng& rng) {
  detail::NoiseWorkspace ws;
  return largest_noise_eigenvalue(h, d, n, rng, ws);
}

/// Full spectrum of one simulated noise sample covariance.
inline EigenSpectrum noise_spectrum(const Psd& h, std::size_t d, std::size_t n, Rng& rng, bool center = false) {
  if (d < 1 || n < 2) throw InvalidArgument("noise_spectrum needs d >= 1, n >= 2");
  const auto [unit, factor] = detail::unit_scale(h);
  detail::NoiseWorkspace ws;
  detail::draw_noise(unit, d, n, rng, ws);
  EigenSpectrum s = sample_cov_spectrum(ws.w, center);
  return factor == 1.0 ? s : s.scaled(factor);
}

struct ThresholdEstimate {
  double s_alpha = 0.0;
  double alpha = 0.0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0; // substream tag; the sequential test uses the step index
  double sample_min = 0.0;
  double sample_median = 0.0;
  double sample_max = 0.0;
  std::vector<double> samples; // by replication index; filled when requested
  Psd psd = Psd::point_mass(1.0);
  std::size_t d = 0;
  std::size_t n = 0;
};

struct ThresholdOptions {
  std::uint64_t stream = 0;
  unsigned threads = 0; // 0: SPIKES_THREADS or hardware concurrency
  bool keep_samples = false;
};

/// ⌈(1 − α)B⌉-th order statistic (type "higher").
inline double upper_quantile(std::vector<double> values, double alpha) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = (1.0 - alpha) * static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(pos - 1e-9));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

/// Monte-Carlo (1 − α)-quantile of the largest noise eigenvalue under H at (d, n).
/// Replication b uses substream (seed, opt.stream, b); the result does not
/// depend on the number of threads.
inline ThresholdEstimate threshold(const Psd& h, std::size_t d, std::size_t n, double alpha, std::size_t B,
                                   std::uint64_t seed, const ThresholdOptions& opt = {}) {
  if (B < kMinThresholdReplications)
    throw InvalidArgument("threshold needs B >= " + std::to_string(kMinThresholdReplications));
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("threshold level alpha must lie in (0, 0.5)");
  if (d < 2 || n < 2) throw InvalidArgument("threshold needs d, n >= 2");

  std::vector<double> lambda1(B);
  const unsigned threads = resolve_threads(opt.threads);
  std::vector<detail::NoiseWorkspace> workspaces(threads);
  parallel_for(B, threads, [&](std::size_t b, unsigned worker) {
    Rng rng = Rng::substream(seed, opt.stream, b);
    lambda1[b] = largest_noise_eigenvalue(h, d, n, rng, workspaces[worker]);
  });

  ThresholdEstimate out;
  out.alpha = alpha;
  out.B = B;
  out.seed = seed;
  out.stream = opt.stream;
  out.psd = h;
  out.d = d;
  out.n = n;
  out.s_alpha = upper_quantile(lambda1, alpha);
  std::vector<double> sorted = lambda1;
  std::sort(sorted.begin(), sorted.end());
  out.sample_min = sorted.front();
  out.sample_max = sorted.back();
  out.sample_median = B % 2 ? sorted[B / 2] : 0.5 * (sorted[B / 2 - 1] + sorted[B / 2]);
  if (opt.keep_samples) out.samples = std::move(lambda1);
  return out;
}

struct Spike {
  double value;
  std::size_t multiplicity = 1;
};

struct SpikedModelSpec {
  std::vector<Spike> spikes; // strictly descending values
  Psd noise = Psd::point_mass(1.0);
  std::size_t d = 0;
  std::size_t n = 0;

  std::size_t spike_dimension() const {
    std::size_t m = 0;
    for (const auto& s : spikes) m += s.multiplicity;
    return m;
  }

  void validate() const {
    if (d < 1 || n < 2) throw InvalidArgument("spiked model needs d >= 1 and n >= 2");
    for (std::size_t i = 0; i < spikes.size(); ++i) {
      if (!(spikes[i].value > 0.0)) throw InvalidArgument("spikes must be positive");
      if (spikes[i].multiplicity < 1) throw InvalidArgument("spike multiplicity must be >= 1");
      if (i > 0 && !(spikes[i].value < spikes[i - 1].value))
        throw InvalidArgument("spikes must be strictly descending; use multiplicities for ties");
    }
    if (spike_dimension() >= d) throw InvalidArgument("total spike multiplicity must be below d");
  }
};

/// Spikes at or below the top of the noise support (allowed, but they need
/// not separate from the bulk).
inline std::vector<double> subcritical_spikes(const SpikedModelSpec& spec) {
  std::vector<double> out;
  for (const auto& s : spec.spikes)
    if (s.value <= spec.noise.upper_bound()) out.push_back(s.value);
  return out;
}

/// X = T^{1/2} Z with diag(T) = spikes followed by d − M noise draws. Rows
/// are shuffled unless permute_rows is false.
inline Eigen::MatrixXd generate_spiked_data(const SpikedModelSpec& spec, Rng& rng, bool permute_rows = true) {
  spec.validate();
  std::vector<double> diag;
  diag.reserve(spec.d);
  for (const auto& s : spec.spikes) diag.insert(diag.end(), s.multiplicity, s.value);
  std::vector<double> noise(spec.d - diag.size());
  sample_into(spec.noise, noise, rng);
  diag.insert(diag.end(), noise.begin(), noise.end());
  if (permute_rows) {
    for (std::size_t i = diag.size(); i > 1; --i) std::swap(diag[i - 1], diag[rng.below(i)]);
  }
  for (auto& t : diag) t = std::sqrt(t);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.n));
  for (std::size_t j = 0; j < spec.n; ++j) {
    double* col = x.col(static_cast<Eigen::Index>(j)).data();
    for (std::size_t i = 0; i < spec.d; ++i) col[i] = diag[i] * rng.normal();
  }
  return x;
}

} // namespace spikes
