#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "spikes/rmt.hpp"
#include "spikes/simulate.hpp"

using namespace spikes;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd gaussian(std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(d, n);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rng.normal();
  return x;
}

std::vector<double> dense_eigenvalues(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + s.rows());
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

} // namespace

TEST_CASE("Gram trick preserves the nonzero spectrum") {
  for (auto [d, n] : {std::pair<std::size_t, std::size_t>{50, 30}, {30, 50}}) {
    const Eigen::MatrixXd x = gaussian(d, n, 100 + d);
    const auto direct = dense_eigenvalues(x * x.transpose() / static_cast<double>(n));
    const auto spec = sample_cov_spectrum(x, false);
    REQUIRE(spec.size() == std::min(d, n));
    for (std::size_t i = 0; i < spec.size(); ++i) CHECK_THAT(spec.values()[i], WithinRel(direct[i], 1e-8));
    CHECK(spec.structural_zeros() == d - std::min(d, n));
  }
}

TEST_CASE("sample covariance spectrum small cases") {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  const auto s = sample_cov_spectrum(id, false);
  CHECK_THAT(s[1], WithinAbs(0.5, 1e-15));
  CHECK_THAT(s[2], WithinAbs(0.5, 1e-15));

  Eigen::MatrixXd dup(3, 4);
  dup.col(0) << 1, 2, 3;
  dup.col(1) << 1, 2, 3;
  dup.col(2) << 1, 2, 3;
  dup.col(3) << 1, 2, 3;
  const auto r = sample_cov_spectrum(dup, false);
  CHECK_THAT(r[1], WithinRel(14.0, 1e-12));
  CHECK_THAT(r[2], WithinAbs(0.0, 1e-12));

  CHECK_THROWS_AS(sample_cov_spectrum(Eigen::MatrixXd(3, 1), false), DegenerateInput);
  const auto centered = sample_cov_spectrum(gaussian(10, 6, 1), true);
  CHECK(centered.size() == 5);
  CHECK(centered.structural_zeros() == 5);
}

TEST_CASE("Lanczos top eigenvalue agrees with the full decomposition") {
  for (auto [d, n] : {std::pair<std::size_t, std::size_t>{40, 20}, {120, 200}, {400, 150}, {300, 300}}) {
    const Eigen::MatrixXd x = gaussian(d, n, d * 7 + n);
    Eigen::MatrixXd g;
    detail::small_gram(x, g);
    const double full = detail::full_top_eigenvalue(g);
    CHECK_THAT(top_eigenvalue(g), WithinRel(full, 1e-10));
  }
  // Rank one: Lanczos terminates on an invariant subspace.
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(100, 1.0, 2.0);
  Eigen::MatrixXd r1 = v * v.transpose();
  CHECK_THAT(top_eigenvalue(r1), WithinRel(v.squaredNorm(), 1e-10));
}

TEST_CASE("largest noise eigenvalue sits at the MP edge") {
  Rng rng(42);
  const double l = largest_noise_eigenvalue(Psd::point_mass(1.0), 1000, 1000, rng);
  CHECK(l > 3.7);
  CHECK(l < 4.4);
}

TEST_CASE("scale equivariance with shared noise draws") {
  for (double c : {0.014, 2.0, 7.3}) {
    Rng a = Rng::substream(5, 0, 0);
    Rng b = Rng::substream(5, 0, 0);
    const double l1 = largest_noise_eigenvalue(Psd::point_mass(1.0), 80, 60, a);
    const double lc = largest_noise_eigenvalue(Psd::point_mass(c), 80, 60, b);
    CHECK_THAT(lc / l1, WithinRel(c, 1e-15));
  }
  Rng a = Rng::substream(6, 0, 0);
  Rng b = Rng::substream(6, 0, 0);
  const auto g = Psd::truncated_gamma(2, 10);
  CHECK_THAT(largest_noise_eigenvalue(g.scaled(7.3), 80, 60, b),
             WithinRel(7.3 * largest_noise_eigenvalue(g, 80, 60, a), 1e-15));
}

TEST_CASE("threshold at d = n = 400") {
  const auto t = threshold(Psd::point_mass(1.0), 400, 400, 0.01, 1000, 1);
  CHECK(t.s_alpha > 4.0);
  CHECK(t.s_alpha < 4.5);
  CHECK(t.sample_min <= t.s_alpha);
  CHECK(t.s_alpha <= t.sample_max);
  CHECK(t.B == 1000);
  CHECK(t.alpha == 0.01);
}

TEST_CASE("threshold is deterministic, thread-independent and equivariant") {
  const auto h = Psd::point_mass(1.0);
  ThresholdOptions serial;
  serial.threads = 1;
  serial.keep_samples = true;
  ThresholdOptions parallel = serial;
  parallel.threads = 4;
  const auto a = threshold(h, 120, 60, 0.01, 200, 77, serial);
  const auto b = threshold(h, 120, 60, 0.01, 200, 77, serial);
  const auto c = threshold(h, 120, 60, 0.01, 200, 77, parallel);
  CHECK(a.s_alpha == b.s_alpha);
  CHECK(a.s_alpha == c.s_alpha);
  CHECK(a.samples == c.samples);

  // Replication b does not depend on B.
  const auto longer = threshold(h, 120, 60, 0.01, 300, 77, serial);
  for (std::size_t i = 0; i < 200; ++i) CHECK(longer.samples[i] == a.samples[i]);

  const auto doubled = threshold(Psd::point_mass(2.0), 120, 60, 0.01, 200, 77, serial);
  CHECK_THAT(doubled.s_alpha, WithinRel(2.0 * a.s_alpha, 1e-15));

  double prev = 1e300;
  for (double alpha : {0.001, 0.01, 0.05, 0.1, 0.2, 0.4}) {
    const double s = threshold(h, 120, 60, alpha, 200, 77, serial).s_alpha;
    CHECK(s <= prev);
    prev = s;
  }
  CHECK_THROWS_AS(threshold(h, 120, 60, 0.01, 99, 77), InvalidArgument);
  CHECK_THROWS_AS(threshold(h, 120, 60, 0.5, 200, 77), InvalidArgument);
}

TEST_CASE("upper quantile is the ceil((1 - alpha) B)-th order statistic") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = 100 - i;
  CHECK(upper_quantile(v, 0.01) == 99.0);
  CHECK(upper_quantile(v, 0.05) == 95.0);
  CHECK(upper_quantile(v, 0.011) == 99.0);
  CHECK(upper_quantile({3.0}, 0.01) == 3.0);
}

TEST_CASE("threshold matches an independent 99th percentile") {
  const auto h = Psd::point_mass(1.0);
  const auto t = threshold(h, 200, 100, 0.01, 1000, 3);
  std::vector<double> fresh(2000);
  for (std::size_t b = 0; b < fresh.size(); ++b) {
    Rng rng = Rng::substream(999, 1, b);
    fresh[b] = largest_noise_eigenvalue(h, 200, 100, rng);
  }
  std::sort(fresh.begin(), fresh.end());
  CHECK_THAT(fresh[1979], WithinRel(t.s_alpha, 0.05));

  // Null exceedance with H known.
  std::size_t exceed = 0;
  for (std::size_t b = 0; b < 500; ++b) {
    Rng rng = Rng::substream(4242, 2, b);
    exceed += largest_noise_eigenvalue(h, 200, 100, rng) > t.s_alpha;
  }
  CHECK(static_cast<double>(exceed) / 500.0 <= 0.04);
}

TEST_CASE("generalized spike data") {
  Rng rng(8);
  SpikedModelSpec pure;
  pure.d = 500;
  pure.n = 250;
  const auto s0 = sample_cov_spectrum(generate_spiked_data(pure, rng), false);
  const double edge = std::pow(1 + std::sqrt(2.0), 2);
  const double tw = std::pow(250.0, -2.0 / 3.0) * (1 + std::sqrt(2.0)) * std::cbrt(1 + 1 / std::sqrt(2.0));
  CHECK(std::fabs(s0[1] - edge) < 6 * tw);

  SpikedModelSpec one = pure;
  one.spikes = {{25.0}};
  const auto s1 = sample_cov_spectrum(generate_spiked_data(one, rng), false);
  const double target = psi(Psd::point_mass(1.0), 2.0, 25.0);
  CHECK_THAT(target, WithinAbs(25.0 + 50.0 / 24.0, 1e-12));
  CHECK_THAT(s1[1], WithinRel(target, 0.15));

  SpikedModelSpec sub = pure;
  sub.spikes = {{2.0}};
  CHECK(subcritical_spikes(sub).empty());
  const auto s2 = sample_cov_spectrum(generate_spiked_data(sub, rng), false);
  CHECK(s2[1] <= edge + 3 * std::pow(250.0, -2.0 / 3.0) * edge);

  SpikedModelSpec bad = pure;
  bad.spikes = {{3.0}, {5.0}};
  CHECK_THROWS_AS(generate_spiked_data(bad, rng), InvalidArgument);
  bad.spikes = {{5.0, 500}};
  CHECK_THROWS_AS(generate_spiked_data(bad, rng), InvalidArgument);

  SpikedModelSpec below = pure;
  below.spikes = {{0.5}};
  CHECK(subcritical_spikes(below) == std::vector<double>{0.5});
}

TEST_CASE("ESD of white noise follows the MP density") {
  Rng rng(31);
  const auto spec = noise_spectrum(Psd::point_mass(1.0), 1000, 500, rng);
  const double y = 2.0;
  const double a = std::pow(1 - std::sqrt(y), 2);
  const double b = std::pow(1 + std::sqrt(y), 2);
  const int bins = 20;
  const double w = (b - a) / bins;
  std::vector<double> counts(bins, 0.0);
  for (double l : spec.values()) counts[std::clamp(static_cast<int>((l - a) / w), 0, bins - 1)] += 1.0;
  // Nonzero part of the MP law has density y × mp_density on [a, b].
  double l1 = 0.0;
  for (int k = 0; k < bins; ++k) {
    double mass = 0.0;
    const int sub = 200;
    for (int i = 0; i < sub; ++i) mass += y * mp_density(1.0, y, a + w * (k + (i + 0.5) / sub)) * w / sub;
    l1 += std::fabs(counts[k] / spec.size() - mass);
  }
  CHECK(l1 <= 0.05);
}
