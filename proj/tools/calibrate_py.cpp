// Calibrates the spacing constant of the PY estimator.
//
// For each pure white-noise spectrum the smallest c giving k_hat = 0 is
// max(δ₁, …, δ_r) / (σ̂² n^{-2/3}(1 + √y)(1 + 1/√y)^{1/3}). The reported
// constant is the upper (1 − fp) sample quantile of that ratio, so the
// false-positive rate at the calibration geometry is at most fp.

#include <algorithm>
#include <cstdio>
#include <vector>

#include <CLI11.hpp>

#include "spikes/estimate.hpp"
#include "spikes/simulate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Calibrate the PY spacing constant on pure white noise"};
  std::size_t d = 500;
  std::size_t n = 500;
  std::size_t reps = 2000;
  std::size_t r = 2;
  double fp = 0.10;
  std::uint64_t seed = 20240601;
  app.add_option("--d", d, "dimension");
  app.add_option("--n", n, "sample size");
  app.add_option("--reps", reps, "number of noise spectra");
  app.add_option("--r", r, "consecutive spacings required to stop");
  app.add_option("--fp", fp, "target false-positive rate");
  app.add_option("--seed", seed, "seed");
  CLI11_PARSE(app, argc, argv);

  std::vector<double> ratio(reps);
  const auto unit = spikes::Psd::point_mass(1.0);
  spikes::parallel_for(reps, spikes::resolve_threads(), [&](std::size_t b, unsigned) {
    auto rng = spikes::Rng::substream(seed, 0, b);
    const auto spec = spikes::noise_spectrum(unit, d, n, rng);
    const double scale = spikes::py_spacing_threshold(spec, spikes::py_noise_variance(spec), 1.0);
    double widest = 0.0;
    for (std::size_t i = 0; i < r; ++i) widest = std::max(widest, spec.values()[i] - spec.values()[i + 1]);
    ratio[b] = widest / scale;
  });
  const double c = spikes::upper_quantile(ratio, fp);
  std::size_t false_positives = 0;
  for (double v : ratio) false_positives += v > c;
  std::printf("d=%zu n=%zu reps=%zu r=%zu\n", d, n, reps, r);
  for (double level : {0.5, 0.8, 0.9, 0.95})
    std::printf("q%.2f=%.4f ", level, spikes::upper_quantile(ratio, 1.0 - level));
  std::printf("\nc=%.4f false_positive_rate=%.4f\n", c, static_cast<double>(false_positives) / static_cast<double>(reps));
  return 0;
}
