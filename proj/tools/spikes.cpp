// spikes: estimate the number of spikes in sample-covariance spectra.

#include <iostream>

#include <CLI11.hpp>

#include "spikes/commands.hpp"

namespace {

void add_input_options(CLI::App* sub, spikes::RunConfig& cfg) {
  sub->add_option("--input", cfg.inputs, "count matrix (csv/tsv) or spectrum JSON; repeatable")->required();
  sub->add_option("--format", cfg.format, "input format")
      ->check(CLI::IsMember({"auto", "csv", "tsv", "json"}))
      ->capture_default_str();
  sub->add_flag("--header", cfg.has_header, "first line holds column names");
  sub->add_flag("--rownames", cfg.has_rownames, "first column holds row names");
  sub->add_flag("--transpose", cfg.transpose, "file rows are samples instead of positions");
}

void add_common_options(CLI::App* sub, spikes::RunConfig& cfg) {
  sub->add_option("--psd", cfg.psd, "noise PSD model")
      ->check(CLI::IsMember({"point-mass", "truncated-gamma"}))
      ->capture_default_str();
  sub->add_option("--alpha", cfg.alpha, "test level")->capture_default_str();
  sub->add_option("--B", cfg.B, "Monte-Carlo replications per threshold");
  sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  sub->add_option("--q", cfg.truncation_quantile, "Gamma truncation quantile")->capture_default_str();
  sub->add_option("--out-dir", cfg.out_dir, "output directory")->capture_default_str();
  sub->add_option("--threads", cfg.threads, "worker threads (0: SPIKES_THREADS or hardware)");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spike-count estimation for high-dimensional sample covariance spectra"};
  app.set_version_flag("--version", spikes::kVersion);
  app.require_subcommand(1);
  spikes::RunConfig cfg;

  auto* estimate = app.add_subcommand("estimate", "sequential Monte-Carlo spike test (CM)");
  add_input_options(estimate, cfg);
  add_common_options(estimate, cfg);
  estimate->add_option("--m-max", cfg.m_max, "stopping cap (0: number of eigenvalues minus 10)");
  estimate->add_flag("--emit-spectrum", cfg.emit_spectrum, "also write the eigenvalue spectrum JSON");
  estimate->add_flag("!--no-precheck", cfg.precheck, "skip the point-mass envelope pre-check");

  auto* compare = app.add_subcommand("compare", "CM, KN and PY side by side");
  add_input_options(compare, cfg);
  add_common_options(compare, cfg);
  compare->add_option("--m-max", cfg.m_max, "CM stopping cap");
  compare->add_option("--py-r", cfg.py_r, "PY consecutive small spacings")->capture_default_str();

  auto* diagnose = app.add_subcommand("diagnose", "psi envelopes, ESD histograms and support comparison");
  add_input_options(diagnose, cfg);
  add_common_options(diagnose, cfg);
  diagnose->add_option("--Q", cfg.Q, "envelope replicates")->capture_default_str();
  diagnose->add_option("--drop-top", cfg.drop_top, "comma-separated numbers of top eigenvalues to remove")
      ->delimiter(',');
  diagnose->add_option("--bins", cfg.bins, "histogram bins")->capture_default_str();
  diagnose->add_option("--alpha-tw", cfg.alpha_tw, "upper quantile level for the support extension")
      ->capture_default_str();
  diagnose->add_option("--support-B", cfg.support_B, "replications for the support extension")
      ->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "largest-noise-eigenvalue threshold");
  add_common_options(simulate, cfg);
  simulate->add_option("--d", cfg.d, "dimension")->required();
  simulate->add_option("--n", cfg.n, "sample size")->required();
  simulate->add_option("--sigma2", cfg.sigma2, "point-mass variance")->capture_default_str();
  simulate->add_option("--shape", cfg.shape, "truncated-Gamma shape")->capture_default_str();
  simulate->add_option("--rate", cfg.rate, "truncated-Gamma rate")->capture_default_str();
  simulate->add_flag("--emit-samples", cfg.emit_samples, "write every simulated largest eigenvalue");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : spikes::kExitInput;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return spikes::run_command(cfg);
}
