#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spikes/commands.hpp"

using namespace spikes;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::StartsWith;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spikes_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Counts whose log transform carries two strong latent factors.
void write_counts(const fs::path& p, std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> f1(n), f2(n);
  for (auto& v : f1) v = rng.normal();
  for (auto& v : f2) v = rng.normal();
  std::ofstream out(p);
  for (std::size_t i = 0; i < d; ++i) {
    const double l1 = i % 2 ? 0.8 : -0.8;
    const double l2 = i % 3 ? 0.5 : -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double mu = 3.0 + l1 * f1[j] + l2 * f2[j] + 0.3 * rng.normal();
      out << (j ? "," : "") << static_cast<long>(std::floor(std::pow(10.0, std::max(0.0, mu))));
    }
    out << "\n";
  }
}

void write_spectrum(const fs::path& p, const std::vector<double>& v, std::size_t d, std::size_t n) {
  std::ofstream out(p);
  out << to_json(EigenSpectrum(v, d, n), p.stem().string()).dump();
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SPIKES_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig base(const std::string& command, const fs::path& dir) {
  RunConfig c;
  c.command = command;
  c.out_dir = (dir / "out").string();
  c.B = 100;
  c.seed = 5;
  c.threads = 1;
  return c;
}

} // namespace

TEST_CASE("estimate writes a deterministic JSON result") {
  const fs::path dir = scratch("estimate");
  write_counts(dir / "GENE1.csv", 120, 60, 1);
  RunConfig c = base("estimate", dir);
  c.inputs = {(dir / "GENE1.csv").string()};
  c.psd = "point-mass";
  c.emit_spectrum = true;
  std::ostringstream out, err;
  REQUIRE(run_command(c, out, err) == kExitOk);
  const std::string first = slurp(dir / "out" / "GENE1.estimate.json");
  const json j = json::parse(first);
  CHECK(j["gene_id"] == "GENE1");
  CHECK(j["method"] == "CM");
  CHECK(j["k_hat"].get<int>() >= 2);
  CHECK(j["d"] == 120);
  CHECK(fs::exists(dir / "out" / "GENE1.spectrum.json"));
  const json m = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(m["exit_code"] == 0);
  CHECK(m["command"] == "estimate");

  c.threads = 3;
  REQUIRE(run_command(c, out, err) == kExitOk);
  CHECK(slurp(dir / "out" / "GENE1.estimate.json") == first);

  // The emitted spectrum reads back as input.
  RunConfig again = base("estimate", dir);
  again.out_dir = (dir / "out2").string();
  again.psd = "point-mass";
  again.inputs = {(dir / "out" / "GENE1.spectrum.json").string()};
  REQUIRE(run_command(again, out, err) == kExitOk);
  CHECK(json::parse(slurp(dir / "out2" / "GENE1.estimate.json"))["k_hat"] == j["k_hat"]);
}

TEST_CASE("input errors exit with code 2") {
  const fs::path dir = scratch("errors");
  const fs::path log = dir / "log.txt";
  CHECK(run("estimate --input \"" + (dir / "missing.csv").string() + "\" --out-dir \"" + dir.string() + "\"", log) == 2);
  CHECK_THAT(slurp(log), ContainsSubstring("missing.csv"));

  std::ofstream(dir / "ragged.csv") << "1,2,3\n4,5\n";
  CHECK(run("estimate --input \"" + (dir / "ragged.csv").string() + "\" --out-dir \"" + dir.string() + "\"", log) == 2);
  CHECK_THAT(slurp(log), ContainsSubstring("line 2"));

  std::ofstream(dir / "neg.csv") << "1,2\n3,-3\n";
  CHECK(run("estimate --input \"" + (dir / "neg.csv").string() + "\" --out-dir \"" + dir.string() + "\"", log) == 2);
  CHECK_THAT(slurp(log), ContainsSubstring("negative count"));

  std::ofstream(dir / "flat.csv") << "5,5,5\n7,7,7\n";
  CHECK(run("estimate --input \"" + (dir / "flat.csv").string() + "\" --out-dir \"" + dir.string() + "\"", log) == 2);

  CHECK(run("estimate --bogus-flag", log) == 2);
  CHECK(run("estimate --input x.csv --psd beta", log) == 2);
  CHECK(run("--version", log) == 0);
  CHECK_THAT(slurp(log), ContainsSubstring(kVersion));
}

TEST_CASE("compare writes the comparison table") {
  const fs::path dir = scratch("compare");
  write_counts(dir / "A.csv", 100, 50, 2);
  std::vector<double> geometric(49);
  for (std::size_t i = 0; i < geometric.size(); ++i) geometric[i] = std::pow(0.7, static_cast<double>(i));
  write_spectrum(dir / "B.json", geometric, 300, 50);
  RunConfig c = base("compare", dir);
  c.psd = "point-mass";
  c.inputs = {(dir / "A.csv").string(), (dir / "B.json").string()};
  std::ostringstream out, err;
  REQUIRE(run_command(c, out, err) == kExitOk);
  std::istringstream csv(slurp(dir / "out" / "comparison.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "gene,d,cm_k,cm_tau,cm_nu,kn_k,kn_sigma2,py_k,py_sigma2");
  std::getline(csv, line);
  CHECK_THAT(line, StartsWith("A,100,"));
  CHECK_THAT(line, ContainsSubstring(",NA,NA,"));
  std::getline(csv, line);
  CHECK_THAT(line, StartsWith("B,300,"));
  // KN rejects every eigenvalue of B: k = 49 and no variance.
  CHECK_THAT(line, ContainsSubstring(",49,NA,"));
  const json j = json::parse(slurp(dir / "out" / "comparison.json"));
  CHECK(j["genes"].size() == 2);
  CHECK(j["genes"][1]["kn"]["exhausted"] == true);

  // Gamma model fills the CM parameters.
  c.psd = "truncated-gamma";
  c.inputs = {(dir / "A.csv").string()};
  REQUIRE(run_command(c, out, err) == kExitOk);
  std::istringstream csv2(slurp(dir / "out" / "comparison.csv"));
  std::getline(csv2, line);
  std::getline(csv2, line);
  CHECK_THAT(line, !ContainsSubstring("A,100,0,NA"));
}

TEST_CASE("diagnose writes one panel per drop level") {
  const fs::path dir = scratch("diagnose");
  write_counts(dir / "G.csv", 80, 40, 3);
  RunConfig c = base("diagnose", dir);
  c.inputs = {(dir / "G.csv").string()};
  c.psd = "point-mass";
  c.Q = 20;
  c.support_B = 100;
  c.drop_top = {0, 2, 5};
  std::ostringstream out, err;
  REQUIRE(run_command(c, out, err) == kExitOk);
  const json j = json::parse(slurp(dir / "out" / "G.diagnose.json"));
  REQUIRE(j["panels"].size() == 3);
  CHECK(j["panels"][1]["drop_top"] == 2);
  CHECK(j["panels"][1]["d"] == 78);
  CHECK(j["panels"][2]["histogram"]["total"] == 39 - 5);
  CHECK(j["panels"][0]["envelope"]["envelopes"].size() == 20);

  c.drop_top = {39};
  CHECK(run_command(c, out, err) == kExitInput);
}

TEST_CASE("simulate writes the threshold and samples") {
  const fs::path dir = scratch("simulate");
  RunConfig c = base("simulate", dir);
  c.d = 60;
  c.n = 30;
  c.psd = "point-mass";
  c.emit_samples = true;
  std::ostringstream out, err;
  REQUIRE(run_command(c, out, err) == kExitOk);
  const json t = json::parse(slurp(dir / "out" / "threshold.json"));
  CHECK(t["B"] == 100);
  CHECK(t["s_alpha"].get<double>() > 0.0);
  std::istringstream csv(slurp(dir / "out" / "lambda1_samples.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  CHECK(line == "replication,lambda1");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 100);

  c.d = 1;
  CHECK(run_command(c, out, err) == kExitInput);
}

TEST_CASE("point-mass fits on heavy-tailed spectra raise a warning") {
  const fs::path dir = scratch("warning");
  Rng rng(9);
  const auto s = noise_spectrum(Psd::truncated_gamma(0.05, 0.5), 200, 100, rng);
  write_spectrum(dir / "H.json", s.values(), 200, 100);
  RunConfig c = base("estimate", dir);
  c.psd = "point-mass";
  c.inputs = {(dir / "H.json").string()};
  std::ostringstream out, err;
  REQUIRE(run_command(c, out, err) == kExitOk);
  const json j = json::parse(slurp(dir / "out" / "H.estimate.json"));
  if (!j["exhausted"].get<bool>()) {
    CHECK(j["precheck"]["verdict"] == "FAIL");
    CHECK(j["warnings"][0] == "point-mass PSD rejected by diagnostics");
    CHECK_THAT(err.str(), ContainsSubstring("point-mass PSD rejected"));
  }
}
