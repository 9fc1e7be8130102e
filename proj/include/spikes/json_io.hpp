#pragma once

// JSON forms of the library types. Non-finite numbers serialize as null.

#include <cmath>
#include <string>

#include <json.hpp>

#include "spikes/diagnostics.hpp"
#include "spikes/error.hpp"
#include "spikes/estimate.hpp"
#include "spikes/psd.hpp"
#include "spikes/simulate.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

using nlohmann::json;

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json numbers(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

inline json to_json(const Psd& h) {
  json params;
  if (const auto* pm = h.get_if<PointMass>()) {
    params = {{"sigma2", pm->sigma2}};
  } else if (const auto* g = h.get_if<TruncatedGamma>()) {
    params = {{"shape", g->shape},
              {"rate", g->rate},
              {"truncation_quantile", g->truncation_quantile},
              {"upper_bound", number(h.upper_bound())}};
  } else {
    const auto& dsc = std::get<Discrete>(h.model());
    params = {{"atoms", dsc.atoms}, {"weights", dsc.weights}};
  }
  return {{"model", std::string(h.name())}, {"params", params}};
}

inline Psd psd_from_json(const json& j) {
  try {
    const std::string model = j.at("model").get<std::string>();
    const json& p = j.at("params");
    if (model == "point_mass") return Psd::point_mass(p.at("sigma2").get<double>());
    if (model == "truncated_gamma")
      return Psd::truncated_gamma(p.at("shape").get<double>(), p.at("rate").get<double>(),
                                  p.value("truncation_quantile", kDefaultTruncationQuantile));
    if (model == "discrete")
      return Psd::discrete(p.at("atoms").get<std::vector<double>>(), p.at("weights").get<std::vector<double>>());
    throw InvalidArgument("unknown PSD model '" + model + "'");
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed PSD JSON: ") + e.what());
  }
}

inline json to_json(const EigenSpectrum& s, const std::string& gene_id) {
  return {{"gene_id", gene_id},
          {"d", s.d()},
          {"n", s.n()},
          {"centered", s.centered()},
          {"structural_zeros", s.structural_zeros()},
          {"values_desc", s.values()}};
}

inline EigenSpectrum spectrum_from_json(const json& j) {
  try {
    return EigenSpectrum(j.at("values_desc").get<std::vector<double>>(), j.at("d").get<std::size_t>(),
                         j.at("n").get<std::size_t>(), j.value("centered", false));
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed spectrum JSON: ") + e.what());
  }
}

inline json to_json(const StepRecord& s) {
  json j = {{"m", s.m},
            {"theta", s.theta ? to_json(*s.theta) : json(nullptr)},
            {"s_alpha", number(s.s_alpha)},
            {"lambda_m", number(s.lambda_m)},
            {"rejected", s.rejected}};
  if (!s.note.empty()) j["note"] = s.note;
  return j;
}

inline json to_json(const SpikeEstimate& e) {
  json steps = json::array();
  for (const auto& s : e.steps) steps.push_back(to_json(s));
  return {{"method", std::string(to_string(e.method))},
          {"k_hat", e.k_hat},
          {"alpha", number(e.alpha)},
          {"exhausted", e.exhausted},
          {"status", e.status},
          {"d", e.d},
          {"n", e.n},
          {"psd_final", e.psd_final ? to_json(*e.psd_final) : json(nullptr)},
          {"steps", steps}};
}

inline json to_json(const ThresholdEstimate& t) {
  return {{"s_alpha", t.s_alpha},
          {"alpha", t.alpha},
          {"B", t.B},
          {"seed", t.seed},
          {"stream", t.stream},
          {"d", t.d},
          {"n", t.n},
          {"psd", to_json(t.psd)},
          {"lambda1_summary", {{"min", t.sample_min}, {"median", t.sample_median}, {"max", t.sample_max}}}};
}

inline json to_json(const EnvelopeBundle& b) {
  json env = json::array();
  for (const auto& c : b.envelopes) env.push_back(numbers(c));
  json inside = json::array();
  for (bool v : b.inside) inside.push_back(v);
  return {{"alpha_grid", b.alpha_grid},
          {"theoretical_psi", numbers(b.theoretical_psi)},
          {"envelopes", env},
          {"band_lower", numbers(b.band_lower)},
          {"band_upper", numbers(b.band_upper)},
          {"data_psi", numbers(b.data_psi)},
          {"inside", inside},
          {"evaluated", b.evaluated},
          {"coverage_fraction", b.coverage_fraction},
          {"verdict", b.pass() ? "PASS" : "FAIL"},
          {"verdict_rule", "PASS when coverage_fraction >= 0.9; a reporting convention, not a calibrated test"},
          {"psd", to_json(b.psd)},
          {"d", b.d},
          {"n", b.n},
          {"Q", b.Q},
          {"seed", b.seed}};
}

inline json to_json(const EsdHistogram& h) {
  return {{"drop_top", h.drop_top},
          {"edges", h.edges},
          {"counts", h.counts},
          {"density", h.density},
          {"total", h.total}};
}

inline json to_json(const Interval& iv) { return json::array({number(iv.lo), number(iv.hi)}); }

inline json to_json(const SupportComparison& s) {
  return {{"drop_top", s.drop_top},
          {"empirical_support", to_json(s.empirical)},
          {"theoretical_support", to_json(s.theoretical)},
          {"overlap", s.overlap ? to_json(*s.overlap) : json(nullptr)},
          {"lsd_upper_edge", number(s.lsd_upper_edge)},
          {"simulated_upper", number(s.simulated_upper)},
          {"alpha_tw", s.alpha_tw},
          {"B", s.B},
          {"seed", s.seed}};
}

} // namespace spikes
