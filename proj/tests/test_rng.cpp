#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "spikes/rng.hpp"

using spikes::Rng;

TEST_CASE("substreams are reproducible and distinct") {
  Rng a = Rng::substream(7, 1, 3);
  Rng b = Rng::substream(7, 1, 3);
  Rng c = Rng::substream(7, 1, 4);
  Rng d = Rng::substream(7, 2, 3);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(x != d());
  }
}

TEST_CASE("uniform_open stays strictly inside (0, 1)") {
  Rng r(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform_open();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("below is unbiased on a small range") {
  Rng r(5);
  std::vector<int> counts(6, 0);
  const int n = 600000;
  for (int i = 0; i < n; ++i) counts[r.below(6)]++;
  for (int c : counts) CHECK(std::fabs(c - n / 6.0) < 5.0 * std::sqrt(n / 6.0));
}

TEST_CASE("normal draws match the first four moments") {
  Rng r(11);
  const int n = 1000000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  int tail = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
    tail += std::fabs(z) > 3.442619855899;
  }
  CHECK(std::fabs(s1 / n) < 5.0 / std::sqrt(n));
  CHECK(std::fabs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
  CHECK(std::fabs(s3 / n) < 5.0 * std::sqrt(15.0 / n));
  CHECK(std::fabs(s4 / n - 3.0) < 5.0 * std::sqrt(96.0 / n));
  // P(|Z| > r) for the ziggurat base-strip edge.
  const double p = std::erfc(3.442619855899 / std::sqrt(2.0));
  CHECK(std::fabs(tail - n * p) < 5.0 * std::sqrt(n * p));
}

TEST_CASE("standard_gamma mean and variance") {
  for (double shape : {0.05, 0.5, 1.0, 2.0, 7.5}) {
    Rng r(static_cast<std::uint64_t>(shape * 1000));
    const int n = 400000;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double g = r.standard_gamma(shape);
      REQUIRE(g >= 0.0);
      s1 += g;
      s2 += g * g;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    INFO("shape " << shape);
    CHECK(std::fabs(mean - shape) < 5.0 * std::sqrt(shape / n));
    CHECK(std::fabs(var / shape - 1.0) < 0.05);
  }
}
