#pragma once

// Population spectral distributions (PSDs): the law H of the noise
// population eigenvalues. Three families are supported:
//
//   PointMass       δ_{σ²}
//   TruncatedGamma  Gamma(shape τ, rate ν) restricted to [0, Q_Γ(q)] and renormalized
//   Discrete        finitely many atoms with positive weights
//
// A Psd is immutable after construction and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include "spikes/error.hpp"
#include "spikes/rng.hpp"

namespace spikes {

inline constexpr double kDefaultTruncationQuantile = 0.995;

struct PointMass {
  double sigma2;
};

struct TruncatedGamma {
  double shape;
  double rate;
  double truncation_quantile;
};

struct Discrete {
  std::vector<double> atoms;   // ascending
  std::vector<double> weights; // sum to one
};

class Psd {
public:
  using Model = std::variant<PointMass, TruncatedGamma, Discrete>;

  static Psd point_mass(double sigma2) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
      throw InvalidArgument("point mass requires sigma2 > 0, got " + std::to_string(sigma2));
    return Psd(PointMass{sigma2}, 0.0);
  }

  static Psd truncated_gamma(double shape, double rate, double q = kDefaultTruncationQuantile) {
    if (!(shape > 0.0) || !std::isfinite(shape))
      throw InvalidArgument("truncated gamma requires shape > 0");
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw InvalidArgument("truncated gamma requires rate > 0");
    if (!(q > 0.0 && q <= 1.0))
      throw InvalidArgument("truncation quantile must lie in (0, 1]");
    const double cutoff = q < 1.0 ? boost::math::gamma_p_inv(shape, q)
                                  : std::numeric_limits<double>::infinity();
    return Psd(TruncatedGamma{shape, rate, q}, cutoff);
  }

  static Psd discrete(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
      throw InvalidArgument("discrete PSD needs matching, nonempty atoms and weights");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return atoms[a] < atoms[b]; });
    Discrete out;
    double total = 0.0;
    for (auto i : order) {
      if (!(atoms[i] >= 0.0) || !std::isfinite(atoms[i]))
        throw InvalidArgument("discrete PSD atoms must be finite and >= 0");
      if (!(weights[i] > 0.0)) throw InvalidArgument("discrete PSD weights must be positive");
      out.atoms.push_back(atoms[i]);
      out.weights.push_back(weights[i]);
      total += weights[i];
    }
    if (std::fabs(total - 1.0) > 1e-12)
      throw InvalidArgument("discrete PSD weights must sum to 1 (sum = " + std::to_string(total) + ")");
    return Psd(std::move(out), 0.0);
  }

  const Model& model() const noexcept { return model_; }

  template <class T>
  const T* get_if() const noexcept {
    return std::get_if<T>(&model_);
  }

  std::string_view name() const noexcept {
    switch (model_.index()) {
    case 0: return "point_mass";
    case 1: return "truncated_gamma";
    default: return "discrete";
    }
  }

  /// Upper cut point of a truncated Gamma in rate-1 units (x = ν t).
  double standard_cutoff() const noexcept { return cutoff_; }

  double lower_bound() const noexcept {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointMass>) return m.sigma2;
          else if constexpr (std::is_same_v<T, TruncatedGamma>) return 0.0;
          else return m.atoms.front();
        },
        model_);
  }

  double upper_bound() const noexcept {
    return std::visit(
        [this](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointMass>) return m.sigma2;
          else if constexpr (std::is_same_v<T, TruncatedGamma>) return cutoff_ / m.rate;
          else return m.atoms.back();
        },
        model_);
  }

  bool bounded() const noexcept { return std::isfinite(upper_bound()); }

  /// True if t belongs to the support Γ_H.
  bool in_support(double t) const noexcept {
    return std::visit(
        [&](const auto& m) -> bool {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointMass>) return t == m.sigma2;
          else if constexpr (std::is_same_v<T, TruncatedGamma>) return t >= 0.0 && t <= upper_bound();
          else return std::find(m.atoms.begin(), m.atoms.end(), t) != m.atoms.end();
        },
        model_);
  }

  /// Mass at zero (only discrete PSDs can have one).
  double zero_mass() const noexcept {
    if (const auto* m = get_if<Discrete>(); m && m->atoms.front() == 0.0) return m->weights.front();
    return 0.0;
  }

  /// Same family with every population eigenvalue multiplied by c.
  Psd scaled(double c) const {
    if (!(c > 0.0)) throw InvalidArgument("scale factor must be positive");
    return std::visit(
        [&](const auto& m) -> Psd {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PointMass>) return point_mass(m.sigma2 * c);
          else if constexpr (std::is_same_v<T, TruncatedGamma>)
            return Psd(TruncatedGamma{m.shape, m.rate / c, m.truncation_quantile}, cutoff_);
          else {
            auto atoms = m.atoms;
            for (auto& a : atoms) a *= c;
            return Psd(Discrete{std::move(atoms), m.weights}, 0.0);
          }
        },
        model_);
  }

private:
  Psd(Model m, double cutoff) : model_(std::move(m)), cutoff_(cutoff) {}

  Model model_;
  double cutoff_ = 0.0;
};

namespace detail {

inline double integrate(auto&& f, double a, double b) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-11, &err);
}

// E[f(X, s - X)] for X ~ truncated Gamma(shape, 1) on [0, cutoff], with s a
// point outside the support where f may be nearly singular. The second
// argument is passed exactly so callers can form 1/(s - X) without
// cancellation. Near s the integral is taken in w = log|s - x|.
template <class F>
double truncated_gamma_expect(double shape, double cutoff, double q, double s, F&& f) {
  const double log_norm = -std::lgamma(shape) - std::log(q);
  const bool have_pole = std::isfinite(s);
  auto density = [&](double x) {
    if (x <= 0.0) return 0.0;
    return std::exp((shape - 1.0) * std::log(x) - x + log_norm);
  };
  auto gap = [&](double x) { return have_pole ? s - x : 0.0; };

  const double upper = std::isfinite(cutoff) ? cutoff : std::max(60.0, shape + 40.0 * std::sqrt(shape) + 60.0);
  const double mid = 0.5 * upper;
  double total = 0.0;

  // Lower piece [0, mid]. For shape < 1, u = x^shape removes the x^{shape-1} singularity.
  if (shape < 1.0) {
    const double k = std::exp(-std::lgamma(shape) - std::log(q)) / shape;
    auto g = [&](double u) {
      const double x = std::pow(u, 1.0 / shape);
      return k * std::exp(-x) * f(x, gap(x));
    };
    total += integrate(g, 0.0, std::pow(mid, shape));
  } else {
    auto g = [&](double x) { return density(x) * f(x, gap(x)); };
    total += integrate(g, 0.0, mid);
  }

  // Upper piece [mid, upper].
  if (have_pole && s > upper && (s - upper) < mid) {
    auto g = [&](double w) {
      const double e = std::exp(w);
      const double x = s - e;
      return density(x) * f(x, e) * e;
    };
    total += integrate(g, std::log(s - upper), std::log(s - mid));
  } else {
    auto g = [&](double x) { return density(x) * f(x, gap(x)); };
    total += integrate(g, mid, upper);
  }
  return total;
}

} // namespace detail

/// β_j = ∫ t^j dH(t).
inline double moment(const Psd& h, int j) {
  if (j < 1) throw InvalidArgument("moment order must be >= 1");
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return std::pow(m.sigma2, j);
        } else if constexpr (std::is_same_v<T, TruncatedGamma>) {
          // E[X^j | X <= c] = (τ)_j / ν^j * P(τ + j, νc) / P(τ, νc)
          double rising = 1.0;
          for (int i = 0; i < j; ++i) rising *= (m.shape + i) / m.rate;
          if (m.truncation_quantile >= 1.0) return rising;
          return rising * boost::math::gamma_p(m.shape + j, h.standard_cutoff()) / m.truncation_quantile;
        } else {
          double s = 0.0;
          for (std::size_t i = 0; i < m.atoms.size(); ++i) s += m.weights[i] * std::pow(m.atoms[i], j);
          return s;
        }
      },
      h.model());
}

/// Generalized inverse CDF: smallest t with F(t) >= p.
inline double quantile(const Psd& h, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return m.sigma2;
        } else if constexpr (std::is_same_v<T, TruncatedGamma>) {
          if (p == 0.0) return 0.0;
          if (p == 1.0) return h.upper_bound();
          return boost::math::gamma_p_inv(m.shape, p * m.truncation_quantile) / m.rate;
        } else {
          double cdf = 0.0;
          for (std::size_t i = 0; i < m.atoms.size(); ++i) {
            cdf += m.weights[i];
            if (cdf >= p - 1e-15) return m.atoms[i];
          }
          return m.atoms.back();
        }
      },
      h.model());
}

/// Fills out with i.i.d. draws from h.
inline void sample_into(const Psd& h, std::span<double> out, Rng& rng) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          std::fill(out.begin(), out.end(), m.sigma2);
        } else if constexpr (std::is_same_v<T, TruncatedGamma>) {
          const double cutoff = h.standard_cutoff();
          if (m.truncation_quantile >= 0.5) {
            for (auto& v : out) {
              double g = rng.standard_gamma(m.shape);
              while (g > cutoff) g = rng.standard_gamma(m.shape);
              v = g / m.rate;
            }
          } else {
            for (auto& v : out)
              v = boost::math::gamma_p_inv(m.shape, rng.uniform_open() * m.truncation_quantile) / m.rate;
          }
        } else {
          for (auto& v : out) {
            const double u = rng.uniform();
            double cdf = 0.0;
            std::size_t i = 0;
            for (; i + 1 < m.atoms.size(); ++i) {
              cdf += m.weights[i];
              if (u < cdf) break;
            }
            v = m.atoms[i];
          }
        }
      },
      h.model());
}

inline std::vector<double> sample(const Psd& h, std::size_t d, Rng& rng) {
  std::vector<double> out(d);
  sample_into(h, out, rng);
  return out;
}

struct GammaParams {
  double shape;
  double rate;
};

/// Finds (τ, ν) so that TruncatedGamma(τ, ν, q) has first two moments (beta1, beta2).
///
/// Both moments scale as ν^{-j}, so β₂/β₁² depends on τ alone. The shape is
/// found by a bracketed root search in log τ (seeded at the untruncated
/// solution β₁²/(β₂ − β₁²)) and the rate follows in closed form.
inline GammaParams solve_gamma_from_moments(double beta1, double beta2,
                                            double q = kDefaultTruncationQuantile) {
  if (!(beta1 > 0.0) || !std::isfinite(beta1) || !std::isfinite(beta2))
    throw InvalidArgument("gamma moment fit requires finite beta1 > 0");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("truncation quantile must lie in (0, 1]");
  if (!(beta2 > beta1 * beta1))
    throw NoVarianceError("beta2 <= beta1^2: no spectral variance to fit a gamma law");

  const double target = beta2 / (beta1 * beta1);
  const double variance = beta2 - beta1 * beta1;

  // Scale-free moments of TruncatedGamma(τ, 1, q).
  auto m1 = [q](double shape) {
    if (q >= 1.0) return shape;
    return shape * boost::math::gamma_p(shape + 1.0, boost::math::gamma_p_inv(shape, q)) / q;
  };
  auto m2 = [q](double shape) {
    if (q >= 1.0) return shape * (shape + 1.0);
    return shape * (shape + 1.0) * boost::math::gamma_p(shape + 2.0, boost::math::gamma_p_inv(shape, q)) / q;
  };
  auto residual = [&](double log_shape) {
    const double s = std::exp(log_shape);
    const double a = m1(s);
    return std::log(m2(s) / (a * a)) - std::log(target);
  };

  if (q >= 1.0) {
    const double shape = beta1 * beta1 / variance;
    return {shape, beta1 / variance};
  }

  // The ratio decreases in τ from +∞ to 1. Expand a bracket around the seed.
  const double seed = std::log(beta1 * beta1 / variance);
  double lo = seed - 1.0;
  double hi = seed + 1.0;
  double flo = residual(lo);
  double fhi = residual(hi);
  for (int it = 0; it < 200 && !(flo > 0.0); ++it) {
    hi = lo;
    fhi = flo;
    lo -= 2.0;
    flo = residual(lo);
  }
  for (int it = 0; it < 200 && !(fhi < 0.0); ++it) {
    lo = hi;
    flo = fhi;
    hi += 2.0;
    fhi = residual(hi);
  }
  if (!(flo > 0.0 && fhi < 0.0) || !std::isfinite(flo) || !std::isfinite(fhi))
    throw ConvergenceError("could not bracket the gamma shape", std::min(std::fabs(flo), std::fabs(fhi)));

  std::uintmax_t max_iter = 200;
  auto tol = boost::math::tools::eps_tolerance<double>(50);
  const auto [a, b] = boost::math::tools::toms748_solve(residual, lo, hi, flo, fhi, tol, max_iter);
  const double shape = std::exp(0.5 * (a + b));
  const double rate = m1(shape) / beta1;

  const double r1 = m1(shape) / rate / beta1 - 1.0;
  const double r2 = m2(shape) / (rate * rate) / beta2 - 1.0;
  const double res = std::max(std::fabs(r1), std::fabs(r2));
  if (!(res <= 1e-8)) throw ConvergenceError("gamma moment fit did not converge", res);
  return {shape, rate};
}

} // namespace spikes
