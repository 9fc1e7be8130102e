#pragma once

// Command implementations behind the spikes CLI. Each command reads its
// inputs, writes JSON/CSV artifacts into the output directory and returns a
// process exit code:
//
//   0  success
//   2  input error (unreadable or malformed file, degenerate matrix, bad option)
//   3  estimation failure

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikes/diagnostics.hpp"
#include "spikes/error.hpp"
#include "spikes/estimate.hpp"
#include "spikes/ingest.hpp"
#include "spikes/json_io.hpp"
#include "spikes/simulate.hpp"
#include "spikes/version.hpp"

namespace spikes {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitEstimation = 3;

struct RunConfig {
  std::string command;
  std::vector<std::string> inputs;
  std::string format = "auto"; // auto | csv | tsv | json
  bool has_header = false;
  bool has_rownames = false;
  bool transpose = false;
  std::string psd = "truncated-gamma";
  double alpha = kDefaultAlpha;
  std::optional<std::size_t> B; // command default when unset
  std::size_t Q = kDefaultEnvelopeReplicates;
  std::uint64_t seed = 0;
  std::vector<std::size_t> drop_top;
  std::string out_dir = "spikes_out";
  bool emit_samples = false;
  bool emit_spectrum = false;
  double truncation_quantile = kDefaultTruncationQuantile;
  std::size_t m_max = 0;
  unsigned threads = 0;
  std::size_t bins = 50;
  double alpha_tw = 0.01;
  std::size_t support_B = kDefaultThresholdReplications;
  std::size_t py_r = 2;
  bool precheck = true;
  // simulate
  std::size_t d = 0;
  std::size_t n = 0;
  double sigma2 = 1.0;
  double shape = 2.0;
  double rate = 10.0;
};

inline json to_json(const RunConfig& c) {
  return {{"command", c.command},
          {"inputs", c.inputs},
          {"format", c.format},
          {"header", c.has_header},
          {"rownames", c.has_rownames},
          {"transpose", c.transpose},
          {"psd", c.psd},
          {"alpha", c.alpha},
          {"B", c.B ? json(*c.B) : json(nullptr)},
          {"Q", c.Q},
          {"seed", c.seed},
          {"drop_top", c.drop_top},
          {"out_dir", c.out_dir},
          {"emit_samples", c.emit_samples},
          {"emit_spectrum", c.emit_spectrum},
          {"truncation_quantile", c.truncation_quantile},
          {"m_max", c.m_max},
          {"bins", c.bins},
          {"alpha_tw", c.alpha_tw},
          {"support_B", c.support_B},
          {"py_r", c.py_r},
          {"py_constant", kPassemierYaoConstant},
          {"precheck", c.precheck},
          {"d", c.d},
          {"n", c.n},
          {"sigma2", c.sigma2},
          {"shape", c.shape},
          {"rate", c.rate}};
}

struct NamedSpectrum {
  std::string gene_id;
  EigenSpectrum spectrum;
};

inline NamedSpectrum load_input(const std::string& path_str, const RunConfig& cfg) {
  const std::filesystem::path path(path_str);
  if (!std::filesystem::exists(path)) throw InvalidArgument("input file not found: " + path_str);
  std::string format = cfg.format;
  if (format == "auto") {
    if (path.extension() == ".json") format = "json";
    else format = format_from_path(path) == TableFormat::tsv ? "tsv" : "csv";
  }
  if (format == "json") {
    std::ifstream in(path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw InvalidArgument(path_str + ": invalid JSON: " + e.what());
    }
    return {j.value("gene_id", path.stem().string()), spectrum_from_json(j)};
  }
  if (format != "csv" && format != "tsv") throw InvalidArgument("unknown input format '" + format + "'");
  LoadOptions opt;
  opt.format = format == "tsv" ? TableFormat::tsv : TableFormat::csv;
  opt.has_header = cfg.has_header;
  opt.has_rownames = cfg.has_rownames;
  opt.transpose = cfg.transpose;
  const ExpressionMatrix em = load_matrix(path, opt);
  EigenSpectrum spec = transform_and_spectrum(em);
  if (spec.all_zero()) throw DegenerateInput(path_str + ": every position is constant across samples");
  return {em.gene_id, std::move(spec)};
}

namespace detail {

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out << content;
    if (!out) throw InvalidArgument("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_atomically(path, j.dump(2) + "\n"); }

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline void write_manifest(const RunConfig& cfg, const std::vector<std::string>& outputs, int exit_code) {
  json m = {{"tool", "spikes"},
            {"version", kVersion},
            {"command", cfg.command},
            {"config", to_json(cfg)},
            {"outputs", outputs},
            {"exit_code", exit_code},
            {"created_utc", utc_timestamp()}};
  write_json(std::filesystem::path(cfg.out_dir) / "manifest.json", m);
}

inline CmOptions cm_options(const RunConfig& cfg, unsigned threads) {
  CmOptions o;
  o.alpha = cfg.alpha;
  o.B = cfg.B.value_or(kDefaultSequentialReplications);
  o.seed = cfg.seed;
  o.m_max = cfg.m_max;
  o.truncation_quantile = cfg.truncation_quantile;
  o.threads = threads;
  return o;
}

inline Psd fit_tail(const EigenSpectrum& tail, PsdModel model, double q) {
  return estimate_psd_params(tail, 1, model, tail.aspect_ratio(), q);
}

} // namespace detail

struct PrecheckResult {
  std::size_t drop_top = 0;
  std::size_t Q = 0;
  double coverage_fraction = 0.0;
  bool pass = false;
};

/// Envelope check of a point-mass fit on the eigenvalues left after the
/// estimated spikes, with the minimum number of replicates.
inline std::optional<PrecheckResult> point_mass_precheck(const EigenSpectrum& spec, std::size_t k_hat,
                                                         std::uint64_t seed, unsigned threads) {
  if (k_hat + 2 > spec.size()) return std::nullopt;
  const EigenSpectrum tail = spec.drop_top(k_hat);
  if (tail.all_zero()) return std::nullopt;
  const Psd h = detail::fit_tail(tail, PsdModel::point_mass, kDefaultTruncationQuantile);
  const EnvelopeBundle b = psi_envelope(tail, h, kMinEnvelopeReplicates, {}, seed, threads);
  return PrecheckResult{k_hat, b.Q, b.coverage_fraction, b.pass()};
}

inline int cmd_estimate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const PsdModel model = parse_psd_model(cfg.psd);
  std::filesystem::create_directories(cfg.out_dir);
  std::vector<std::string> written;
  int code = kExitOk;
  for (const auto& path : cfg.inputs) {
    const NamedSpectrum in = load_input(path, cfg);
    const CmOptions opt = detail::cm_options(cfg, cfg.threads);
    const SpikeEstimate est = estimate_spikes_cm(in.spectrum, model, opt);
    json j = to_json(est);
    j["gene_id"] = in.gene_id;
    j["model"] = std::string(to_string(model));
    j["B"] = opt.B;
    j["seed"] = opt.seed;
    j["m_max"] = opt.m_max ? std::min(opt.m_max, in.spectrum.size()) : default_m_max(in.spectrum);
    j["truncation_quantile"] = opt.truncation_quantile;
    json warnings = json::array();
    j["precheck"] = nullptr;
    if (model == PsdModel::point_mass && cfg.precheck) {
      if (const auto pc = point_mass_precheck(in.spectrum, est.k_hat, cfg.seed, cfg.threads)) {
        j["precheck"] = {{"drop_top", pc->drop_top},
                         {"Q", pc->Q},
                         {"coverage_fraction", pc->coverage_fraction},
                         {"verdict", pc->pass ? "PASS" : "FAIL"}};
        if (!pc->pass) {
          warnings.push_back("point-mass PSD rejected by diagnostics");
          err << "warning: " << in.gene_id << ": point-mass PSD rejected by diagnostics (envelope coverage "
              << detail::format_number(pc->coverage_fraction) << ")\n";
        }
      }
    }
    if (est.exhausted) warnings.push_back("stopping cap reached; every tested eigenvalue was rejected");
    j["warnings"] = warnings;
    const std::string name = in.gene_id + ".estimate.json";
    detail::write_json(std::filesystem::path(cfg.out_dir) / name, j);
    written.push_back(name);
    if (cfg.emit_spectrum) {
      const std::string sname = in.gene_id + ".spectrum.json";
      detail::write_json(std::filesystem::path(cfg.out_dir) / sname, to_json(in.spectrum, in.gene_id));
      written.push_back(sname);
    }
    out << in.gene_id << ": k_hat=" << est.k_hat << " status=" << est.status << (est.exhausted ? " (exhausted)" : "")
        << "\n";
    if (est.status != "ok") {
      err << "error: " << in.gene_id << ": estimation stopped at step " << est.steps.back().m << ": "
          << est.steps.back().note << "\n";
      code = kExitEstimation;
    }
  }
  detail::write_manifest(cfg, written, code);
  return code;
}

struct ComparisonRow {
  std::string gene_id;
  std::size_t d = 0;
  std::size_t n = 0;
  SpikeEstimate cm;
  SpikeEstimate kn;
  SpikeEstimate py;
};

inline ComparisonRow compare_one(const NamedSpectrum& in, const RunConfig& cfg, unsigned threads) {
  ComparisonRow row;
  row.gene_id = in.gene_id;
  row.d = in.spectrum.d();
  row.n = in.spectrum.n();
  row.cm = estimate_spikes_cm(in.spectrum, parse_psd_model(cfg.psd), detail::cm_options(cfg, threads));
  row.kn = estimate_spikes_kn(in.spectrum, cfg.alpha);
  row.py = estimate_spikes_py(in.spectrum, cfg.py_r);
  return row;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  auto sigma2 = [](const SpikeEstimate& e) {
    if (!e.psd_final) return std::string("NA");
    return detail::format_number(e.psd_final->get_if<PointMass>()->sigma2);
  };
  std::ostringstream os;
  os << "gene,d,cm_k,cm_tau,cm_nu,kn_k,kn_sigma2,py_k,py_sigma2\n";
  for (const auto& r : rows) {
    std::string tau = "NA";
    std::string nu = "NA";
    if (r.cm.psd_final) {
      if (const auto* g = r.cm.psd_final->get_if<TruncatedGamma>()) {
        tau = detail::format_number(g->shape);
        nu = detail::format_number(g->rate);
      }
    }
    os << r.gene_id << ',' << r.d << ',' << r.cm.k_hat << ',' << tau << ',' << nu << ',' << r.kn.k_hat << ','
       << sigma2(r.kn) << ',' << r.py.k_hat << ',' << sigma2(r.py) << '\n';
  }
  return os.str();
}

inline json comparison_json(const std::vector<ComparisonRow>& rows, const RunConfig& cfg) {
  json genes = json::array();
  for (const auto& r : rows) {
    json g = {{"gene_id", r.gene_id}, {"d", r.d}, {"n", r.n}};
    g["cm"] = to_json(r.cm);
    g["kn"] = to_json(r.kn);
    g["py"] = to_json(r.py);
    g["cm_gamma_orderings"] = nullptr;
    if (r.cm.psd_final) {
      if (const auto* t = r.cm.psd_final->get_if<TruncatedGamma>()) {
        g["cm_gamma_orderings"] = {{"shape_rate", {t->shape, t->rate}},
                                   {"rate_shape", {t->rate, t->shape}},
                                   {"scale_shape", {1.0 / t->rate, t->shape}}};
      }
    }
    genes.push_back(g);
  }
  return {{"genes", genes},
          {"cm_model", std::string(to_string(parse_psd_model(cfg.psd)))},
          {"alpha", cfg.alpha},
          {"B", cfg.B.value_or(kDefaultSequentialReplications)},
          {"seed", cfg.seed},
          {"py_r", cfg.py_r},
          {"py_constant", kPassemierYaoConstant},
          {"notes",
           {"KN and PY are reconstructions from their published descriptions, not the original implementations.",
            "KN noise variance is the mean of the noise block including structural zeros.",
            "NA marks an exhausted run where no noise variance is available."}}};
}

inline int cmd_compare(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& = std::cerr) {
  parse_psd_model(cfg.psd);
  std::filesystem::create_directories(cfg.out_dir);
  std::vector<NamedSpectrum> inputs;
  for (const auto& path : cfg.inputs) inputs.push_back(load_input(path, cfg));

  std::vector<ComparisonRow> rows(inputs.size());
  const unsigned threads = resolve_threads(cfg.threads);
  if (inputs.size() > 1 && threads > 1) {
    parallel_for(inputs.size(), threads, [&](std::size_t i, unsigned) { rows[i] = compare_one(inputs[i], cfg, 1); });
  } else {
    for (std::size_t i = 0; i < inputs.size(); ++i) rows[i] = compare_one(inputs[i], cfg, threads);
  }
  std::vector<std::string> written;
  detail::write_atomically(std::filesystem::path(cfg.out_dir) / "comparison.csv", comparison_csv(rows));
  written.push_back("comparison.csv");
  detail::write_json(std::filesystem::path(cfg.out_dir) / "comparison.json", comparison_json(rows, cfg));
  written.push_back("comparison.json");
  int code = kExitOk;
  for (const auto& r : rows) {
    out << r.gene_id << ": CM=" << r.cm.k_hat << " KN=" << r.kn.k_hat << " PY=" << r.py.k_hat << "\n";
    if (r.cm.status != "ok") code = kExitEstimation;
  }
  detail::write_manifest(cfg, written, code);
  return code;
}

/// Nonzero-eigenvalue MP density for σ² at ratio y on a grid, for overlay plots.
inline json mp_overlay(double sigma2, double y, double x_max, std::size_t points = 200) {
  std::vector<double> x(points);
  std::vector<double> dens(points);
  const double scale = std::max(1.0, y);
  for (std::size_t i = 0; i < points; ++i) {
    x[i] = x_max * static_cast<double>(i) / static_cast<double>(points - 1);
    dens[i] = scale * mp_density(sigma2, y, x[i]);
  }
  return {{"sigma2", sigma2}, {"y", y}, {"x", x}, {"density", dens}};
}

inline int cmd_diagnose(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const PsdModel model = parse_psd_model(cfg.psd);
  std::filesystem::create_directories(cfg.out_dir);
  const std::vector<std::size_t> drops = cfg.drop_top.empty() ? std::vector<std::size_t>{0} : cfg.drop_top;
  std::vector<std::string> written;
  int code = kExitOk;
  for (const auto& path : cfg.inputs) {
    const NamedSpectrum in = load_input(path, cfg);
    for (std::size_t k : drops)
      if (k >= in.spectrum.size())
        throw InvalidArgument("drop-top " + std::to_string(k) + " leaves no eigenvalues for " + in.gene_id);
    json panels = json::array();
    for (std::size_t k : drops) {
      const EigenSpectrum tail = in.spectrum.drop_top(k);
      json panel = {{"drop_top", k}, {"d", tail.d()}, {"n", tail.n()}};
      panel["histogram"] = to_json(esd_histogram(in.spectrum, k, cfg.bins));
      const double sigma2 = empirical_moments(tail, 1, 1)[0];
      panel["mp_overlay"] =
          sigma2 > 0.0
              ? mp_overlay(sigma2, tail.aspect_ratio(), 1.05 * std::max(tail.values().front(),
                                                                        sigma2 * std::pow(1.0 + std::sqrt(tail.aspect_ratio()), 2)))
              : json(nullptr);
      try {
        const Psd h = detail::fit_tail(tail, model, cfg.truncation_quantile);
        panel["psd"] = to_json(h);
        const EnvelopeBundle b = psi_envelope(tail, h, cfg.Q, {}, cfg.seed, cfg.threads);
        panel["envelope"] = to_json(b);
        panel["support"] = to_json(
            support_comparison(in.spectrum, h, k, cfg.alpha_tw, cfg.support_B, cfg.seed, cfg.threads));
        panel["error"] = nullptr;
        out << in.gene_id << " drop_top=" << k << ": coverage=" << detail::format_number(b.coverage_fraction)
            << " " << (b.pass() ? "PASS" : "FAIL") << "\n";
      } catch (const Error& e) {
        panel["psd"] = nullptr;
        panel["envelope"] = nullptr;
        panel["support"] = nullptr;
        panel["error"] = e.what();
        err << "error: " << in.gene_id << " drop_top=" << k << ": " << e.what() << "\n";
        code = kExitEstimation;
      }
      panels.push_back(panel);
    }
    json j = {{"gene_id", in.gene_id},
              {"d", in.spectrum.d()},
              {"n", in.spectrum.n()},
              {"model", std::string(to_string(model))},
              {"Q", cfg.Q},
              {"seed", cfg.seed},
              {"panels", panels}};
    const std::string name = in.gene_id + ".diagnose.json";
    detail::write_json(std::filesystem::path(cfg.out_dir) / name, j);
    written.push_back(name);
  }
  detail::write_manifest(cfg, written, code);
  return code;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& = std::cerr) {
  if (cfg.d < 2 || cfg.n < 2) throw InvalidArgument("simulate needs --d and --n of at least 2");
  const PsdModel model = parse_psd_model(cfg.psd);
  const Psd h = model == PsdModel::point_mass ? Psd::point_mass(cfg.sigma2)
                                              : Psd::truncated_gamma(cfg.shape, cfg.rate, cfg.truncation_quantile);
  std::filesystem::create_directories(cfg.out_dir);
  ThresholdOptions topt;
  topt.threads = cfg.threads;
  topt.keep_samples = cfg.emit_samples;
  const ThresholdEstimate t =
      threshold(h, cfg.d, cfg.n, cfg.alpha, cfg.B.value_or(kDefaultThresholdReplications), cfg.seed, topt);
  std::vector<std::string> written;
  detail::write_json(std::filesystem::path(cfg.out_dir) / "threshold.json", to_json(t));
  written.push_back("threshold.json");
  if (cfg.emit_samples) {
    std::ostringstream os;
    os << "replication,lambda1\n" << std::setprecision(17);
    for (std::size_t b = 0; b < t.samples.size(); ++b) os << b << ',' << t.samples[b] << '\n';
    detail::write_atomically(std::filesystem::path(cfg.out_dir) / "lambda1_samples.csv", os.str());
    written.push_back("lambda1_samples.csv");
  }
  out << "s_alpha=" << std::setprecision(10) << t.s_alpha << "\n";
  detail::write_manifest(cfg, written, kExitOk);
  return kExitOk;
}

/// Dispatches cfg.command and maps exceptions to exit codes.
inline int run_command(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    if (cfg.command != "simulate" && cfg.inputs.empty()) throw InvalidArgument("no --input given");
    if (cfg.command == "estimate") return cmd_estimate(cfg, out, err);
    if (cfg.command == "compare") return cmd_compare(cfg, out, err);
    if (cfg.command == "diagnose") return cmd_diagnose(cfg, out, err);
    if (cfg.command == "simulate") return cmd_simulate(cfg, out, err);
    throw InvalidArgument("unknown command '" + cfg.command + "'");
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DegenerateInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const EmptyTail& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

} // namespace spikes
