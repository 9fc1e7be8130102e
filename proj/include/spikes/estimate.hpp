#pragma once

// Spike-count estimators.
//
//   CM  sequential test against a simulated largest-noise-eigenvalue
//       threshold, with the PSD refitted by the method of moments at every
//       step on the eigenvalues not yet declared spikes
//   KN  point-mass sequential test with a Tracy–Widom threshold
//   PY  successive-spacing rule
//
// KN and PY are reconstructions from their published descriptions and are
// labelled as such in reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "spikes/error.hpp"
#include "spikes/psd.hpp"
#include "spikes/rmt.hpp"
#include "spikes/simulate.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

inline constexpr double kDefaultAlpha = 0.01;
inline constexpr std::size_t kDefaultSequentialReplications = 500;
inline constexpr std::size_t kDefaultMinTail = 10;

enum class PsdModel { point_mass, truncated_gamma };

inline std::string_view to_string(PsdModel m) {
  return m == PsdModel::point_mass ? "point_mass" : "truncated_gamma";
}

inline PsdModel parse_psd_model(std::string_view s) {
  if (s == "point-mass" || s == "point_mass") return PsdModel::point_mass;
  if (s == "truncated-gamma" || s == "truncated_gamma") return PsdModel::truncated_gamma;
  throw InvalidArgument("unknown PSD model '" + std::string(s) + "'");
}

enum class Method { CM, KN, PY };

inline std::string_view to_string(Method m) {
  switch (m) {
  case Method::CM: return "CM";
  case Method::KN: return "KN";
  default: return "PY";
  }
}

struct StepRecord {
  std::size_t m = 0;
  std::optional<Psd> theta; // fitted noise PSD at this step
  double s_alpha = std::numeric_limits<double>::quiet_NaN();
  double lambda_m = 0.0;
  bool rejected = false;
  std::string note; // set when the step could not be completed
};

struct SpikeEstimate {
  Method method = Method::CM;
  std::size_t k_hat = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::vector<StepRecord> steps;
  std::optional<Psd> psd_final; // empty means NA
  bool exhausted = false;
  std::string status = "ok";
  std::size_t d = 0;
  std::size_t n = 0;
};

/// m_j = Σ_{i ≥ from_index} λ̂_i^j / (d − from_index + 1), j = 1..j_max.
/// The denominator counts the structural zeros of the noise block.
inline std::vector<double> empirical_moments(const EigenSpectrum& spec, std::size_t from_index, int j_max) {
  if (j_max < 1) throw InvalidArgument("j_max must be >= 1");
  if (from_index < 1 || from_index > spec.size())
    throw EmptyTail("no eigenvalues at or after index " + std::to_string(from_index));
  const double denom = static_cast<double>(spec.d() - from_index + 1);
  std::vector<double> out(j_max, 0.0);
  for (std::size_t i = from_index - 1; i < spec.size(); ++i) {
    const double l = spec.values()[i];
    double p = 1.0;
    for (int j = 0; j < j_max; ++j) {
      p *= l;
      out[j] += p;
    }
  }
  for (auto& v : out) v /= denom;
  return out;
}

/// Method-of-moments PSD fit on the tail starting at from_index:
/// β̂₁ = m₁, β̂₂ = m₂ − y_eff m₁².
inline Psd estimate_psd_params(const EigenSpectrum& spec, std::size_t from_index, PsdModel model, double y_eff,
                               double q = kDefaultTruncationQuantile) {
  const auto m = empirical_moments(spec, from_index, 2);
  const double beta1 = m[0];
  if (!(beta1 > 0.0)) throw DegenerateInput("tail eigenvalues are all zero");
  if (model == PsdModel::point_mass) return Psd::point_mass(beta1);
  const double beta2 = m[1] - y_eff * beta1 * beta1;
  const auto [shape, rate] = solve_gamma_from_moments(beta1, beta2, q);
  return Psd::truncated_gamma(shape, rate, q);
}

namespace detail {

inline bool replay_consistent(const SpikeEstimate& est) {
  std::size_t k = 0;
  for (const auto& s : est.steps) {
    if (s.rejected != (s.lambda_m > s.s_alpha)) return false;
    if (!s.rejected) return k == est.k_hat;
    ++k;
  }
  return est.exhausted && k == est.k_hat;
}

} // namespace detail

struct CmOptions {
  double alpha = kDefaultAlpha;
  std::size_t B = kDefaultSequentialReplications;
  std::uint64_t seed = 0;
  std::size_t m_max = 0; // 0: number of stored eigenvalues minus kDefaultMinTail
  double truncation_quantile = kDefaultTruncationQuantile;
  unsigned threads = 0;
};

inline std::size_t default_m_max(const EigenSpectrum& spec) {
  const std::size_t r = spec.size();
  if (r > kDefaultMinTail) return r - kDefaultMinTail;
  return std::max<std::size_t>(1, r / 2);
}

/// Sequential test H₀⁽ᵐ⁾: K ≤ m − 1 against H₁⁽ᵐ⁾: K ≥ m.
///
/// At step m the noise block has dimension d − m + 1 (same n); the PSD is
/// fitted on λ̂_m, λ̂_{m+1}, … and the threshold is simulated with substream
/// tag m. A failed fit stops the procedure with status "fit_failed" and the
/// error text in the step's note.
inline SpikeEstimate estimate_spikes_cm(const EigenSpectrum& spec, PsdModel model, const CmOptions& opt = {}) {
  if (!(opt.alpha > 0.0 && opt.alpha < 0.5)) throw InvalidArgument("alpha must lie in (0, 0.5)");
  if (spec.empty()) throw EmptyTail("spectrum has no eigenvalues");
  SpikeEstimate est;
  est.method = Method::CM;
  est.alpha = opt.alpha;
  est.d = spec.d();
  est.n = spec.n();
  const std::size_t m_max = opt.m_max ? std::min(opt.m_max, spec.size()) : default_m_max(spec);

  for (std::size_t m = 1; m <= m_max; ++m) {
    StepRecord step;
    step.m = m;
    step.lambda_m = spec[m];
    const std::size_t d_eff = spec.d() - m + 1;
    const double y_eff = static_cast<double>(d_eff) / static_cast<double>(spec.n());
    try {
      const Psd fit = estimate_psd_params(spec, m, model, y_eff, opt.truncation_quantile);
      step.theta = fit;
      ThresholdOptions topt;
      topt.stream = m;
      topt.threads = opt.threads;
      step.s_alpha = threshold(fit, d_eff, spec.n(), opt.alpha, opt.B, opt.seed, topt).s_alpha;
    } catch (const Error& e) {
      step.note = e.what();
      step.rejected = false;
      est.steps.push_back(std::move(step));
      est.k_hat = m - 1;
      est.status = "fit_failed";
      return est;
    }
    step.rejected = step.lambda_m > step.s_alpha;
    est.steps.push_back(step);
    if (!step.rejected) {
      est.k_hat = m - 1;
      est.psd_final = step.theta;
      return est;
    }
  }
  est.k_hat = m_max;
  est.exhausted = true;
  return est;
}

namespace detail {

// Quantiles of the Tracy–Widom β = 1 law, from the Fredholm determinant
// F₁(s) = det(I − A_s) on L²(0, ∞) with A_s(x, y) = Ai(x + y + s).
inline constexpr std::array<std::pair<double, double>, 21> kTracyWidom1 = {{
    {0.5, -1.268575},   {0.55, -1.109767},  {0.6, -0.946330},   {0.65, -0.775169},  {0.7, -0.592287},
    {0.75, -0.391994},  {0.8, -0.165313},   {0.85, 0.103838},   {0.9, 0.450143},    {0.925, 0.677908},
    {0.95, 0.979316},   {0.96, 1.137061},   {0.97, 1.333213},   {0.975, 1.453771},  {0.98, 1.597756},
    {0.985, 1.778132},  {0.99, 2.023449},   {0.9925, 2.191898}, {0.995, 2.422327},  {0.9975, 2.799791},
    {0.999, 3.272196},
}};

} // namespace detail

/// Tracy–Widom (β = 1) quantile for p in [0.5, 0.999].
///
/// Monotone cubic (Fritsch–Carlson) interpolation of the embedded table in
/// z = −log(1 − p).
inline double tw_quantile(double p) {
  const auto& t = detail::kTracyWidom1;
  if (!(p >= t.front().first && p <= t.back().first))
    throw InvalidArgument("tw_quantile supports p in [0.5, 0.999]");
  constexpr std::size_t n = detail::kTracyWidom1.size();
  std::array<double, n> z{};
  std::array<double, n> q{};
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = -std::log1p(-t[i].first);
    q[i] = t[i].second;
  }
  std::array<double, n - 1> slope{};
  for (std::size_t i = 0; i + 1 < n; ++i) slope[i] = (q[i + 1] - q[i]) / (z[i + 1] - z[i]);
  std::array<double, n> tangent{};
  tangent[0] = slope[0];
  tangent[n - 1] = slope[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (slope[i - 1] * slope[i] <= 0.0) tangent[i] = 0.0;
    else {
      const double h0 = z[i] - z[i - 1];
      const double h1 = z[i + 1] - z[i];
      const double w0 = 2.0 * h1 + h0;
      const double w1 = h1 + 2.0 * h0;
      tangent[i] = (w0 + w1) / (w0 / slope[i - 1] + w1 / slope[i]);
    }
  }
  const double x = -std::log1p(-p);
  std::size_t k = 0;
  while (k + 2 < n && x > z[k + 1]) ++k;
  const double h = z[k + 1] - z[k];
  const double s = (x - z[k]) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  return h00 * q[k] + h10 * h * tangent[k] + h01 * q[k + 1] + h11 * h * tangent[k + 1];
}

/// Largest-eigenvalue fluctuation scale n^{-2/3}(1 + √y)(1 + 1/√y)^{1/3} for σ² = 1.
inline double tw_scale(double y, std::size_t n) {
  const double sy = std::sqrt(y);
  return std::pow(static_cast<double>(n), -2.0 / 3.0) * (1.0 + sy) * std::cbrt(1.0 + 1.0 / sy);
}

/// KN threshold for the step with noise-block aspect ratio y.
inline double kn_threshold(double sigma2, double y, std::size_t n, double alpha) {
  const double sy = std::sqrt(y);
  return sigma2 * ((1.0 + sy) * (1.0 + sy) + tw_scale(y, n) * tw_quantile(1.0 - alpha));
}

/// Point-mass sequential test with a Tracy–Widom threshold. σ̂² at step m
/// is the mean of the noise block including its structural zeros, which
/// equals σ² under the MP law.
inline SpikeEstimate estimate_spikes_kn(const EigenSpectrum& spec, double alpha = kDefaultAlpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("alpha must lie in (0, 0.5)");
  if (spec.empty()) throw EmptyTail("spectrum has no eigenvalues");
  SpikeEstimate est;
  est.method = Method::KN;
  est.alpha = alpha;
  est.d = spec.d();
  est.n = spec.n();
  for (std::size_t m = 1; m <= spec.size(); ++m) {
    const std::size_t d_eff = spec.d() - m + 1;
    const double y = static_cast<double>(d_eff) / static_cast<double>(spec.n());
    const double sigma2 = empirical_moments(spec, m, 1)[0];
    StepRecord step;
    step.m = m;
    step.lambda_m = spec[m];
    step.s_alpha = kn_threshold(sigma2, y, spec.n(), alpha);
    if (sigma2 > 0.0) step.theta = Psd::point_mass(sigma2);
    step.rejected = step.lambda_m > step.s_alpha;
    est.steps.push_back(step);
    if (!step.rejected) {
      est.k_hat = m - 1;
      est.psd_final = step.theta;
      return est;
    }
  }
  est.k_hat = spec.size();
  est.exhausted = true;
  return est;
}

/// Spacing-threshold constant c in t_n = c σ̂² n^{-2/3}(1 + √y)(1 + 1/√y)^{1/3}.
/// Calibrated with tools/calibrate_py so that pure white noise at d = n = 500
/// gives a nonzero count in at most 10% of replications (r = 2).
inline constexpr double kPassemierYaoConstant = 3.71;

namespace detail {

// Mean of the lowest fraction p of the nonzero part of the unit MP(y) law.
inline double mp_lower_partial_mean(double y, double p) {
  const double sy = std::sqrt(y);
  const double a = (1.0 - sy) * (1.0 - sy);
  const double b = (1.0 + sy) * (1.0 + sy);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const double norm = std::max(1.0, y) / (2.0 * std::numbers::pi * y);
  // x(θ) = mid − half cos θ removes the square-root edges.
  auto density_theta = [&](double th) {
    const double x = mid - half * std::cos(th);
    const double s = std::sin(th);
    return x > 0.0 ? norm * half * half * s * s / x : norm * half * half * 2.0 / (b - a) * 2.0;
  };
  auto cdf = [&](double th) {
    if (th <= 0.0) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(density_theta, 0.0, th, 15, 1e-12);
  };
  double lo = 0.0;
  double hi = std::numbers::pi;
  for (int it = 0; it < 100; ++it) {
    const double m = 0.5 * (lo + hi);
    if (cdf(m) < p) lo = m;
    else hi = m;
  }
  const double th = 0.5 * (lo + hi);
  // ∫ x f(x) dx has the closed form norm·half²·(θ/2 − sin 2θ/4).
  const double partial = norm * half * half * (0.5 * th - 0.25 * std::sin(2.0 * th));
  return partial / p;
}

} // namespace detail

/// Noise variance from the trailing half of the nonzero spectrum, matched to
/// the mean of the lower half of the MP law.
inline double py_noise_variance(const EigenSpectrum& spec) {
  const std::size_t r = spec.size();
  if (r == 0) throw EmptyTail("spectrum has no eigenvalues");
  const std::size_t h = std::max<std::size_t>(1, r / 2);
  double mean = 0.0;
  for (std::size_t i = r - h; i < r; ++i) mean += spec.values()[i];
  mean /= static_cast<double>(h);
  // Nonzero eigenvalues follow MP with ratio r/n when r = d, or the
  // companion law when d > n; both are covered by y = d/n here.
  const double y = spec.aspect_ratio();
  return mean / detail::mp_lower_partial_mean(y, static_cast<double>(h) / static_cast<double>(r));
}

inline double py_spacing_threshold(const EigenSpectrum& spec, double sigma2, double c = kPassemierYaoConstant) {
  return c * sigma2 * tw_scale(spec.aspect_ratio(), spec.n());
}

/// Smallest k such that the r consecutive spacings δ_{k+1}, …, δ_{k+r} all
/// fall below t_n. Step m = k + 1 records max(δ_{k+1..k+r}) as lambda_m and
/// t_n as s_alpha.
inline SpikeEstimate estimate_spikes_py(const EigenSpectrum& spec, std::size_t r = 2,
                                        double c = kPassemierYaoConstant) {
  if (r < 1) throw InvalidArgument("PY needs r >= 1");
  if (spec.size() < r + 1) throw EmptyTail("PY needs at least r + 1 eigenvalues");
  SpikeEstimate est;
  est.method = Method::PY;
  est.d = spec.d();
  est.n = spec.n();
  const double sigma2 = py_noise_variance(spec);
  const double tn = py_spacing_threshold(spec, sigma2, c);
  const auto& v = spec.values();
  for (std::size_t k = 0; k + r + 1 <= v.size(); ++k) {
    double widest = 0.0;
    for (std::size_t i = k; i < k + r; ++i) widest = std::max(widest, v[i] - v[i + 1]);
    StepRecord step;
    step.m = k + 1;
    step.lambda_m = widest;
    step.s_alpha = tn;
    if (sigma2 > 0.0) step.theta = Psd::point_mass(sigma2);
    step.rejected = widest > tn;
    est.steps.push_back(step);
    if (!step.rejected) {
      est.k_hat = k;
      est.psd_final = step.theta;
      return est;
    }
  }
  est.k_hat = spec.size();
  est.exhausted = true;
  return est;
}

} // namespace spikes
