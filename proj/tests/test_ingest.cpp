#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>

#include "spikes/ingest.hpp"
#include "spikes/rng.hpp"

using namespace spikes;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ExpressionMatrix parse(const std::string& text, LoadOptions opt = {}) {
  std::istringstream in(text);
  return parse_matrix(in, opt, "g");
}

} // namespace

TEST_CASE("parse a small count table") {
  const auto m = parse("0,9\n99,0\n");
  REQUIRE(m.d() == 2);
  REQUIRE(m.n() == 2);
  CHECK(m.counts(0, 1) == 9.0);
  const auto x = m.transformed();
  CHECK_THAT(x(0, 0), WithinAbs(0.0, 1e-15));
  CHECK_THAT(x(0, 1), WithinAbs(1.0, 1e-15));
  CHECK_THAT(x(1, 0), WithinAbs(2.0, 1e-15));
  CHECK_THAT(x(1, 1), WithinAbs(0.0, 1e-15));
}

TEST_CASE("header, row names, TSV and transpose") {
  LoadOptions opt;
  opt.has_header = true;
  opt.has_rownames = true;
  const auto m = parse("pos,s1,s2,s3\np1,1,2,3\np2,4,5,6\n", opt);
  CHECK(m.d() == 2);
  CHECK(m.n() == 3);
  CHECK(m.row_names == std::vector<std::string>{"p1", "p2"});
  CHECK(m.column_names == std::vector<std::string>{"s1", "s2", "s3"});

  opt.format = TableFormat::tsv;
  opt.transpose = true;
  const auto t = parse("pos\ts1\ts2\ts3\np1\t1\t2\t3\np2\t4\t5\t6\n", opt);
  CHECK(t.d() == 3);
  CHECK(t.n() == 2);
  CHECK(t.counts(2, 1) == 6.0);
  CHECK(t.row_names == std::vector<std::string>{"s1", "s2", "s3"});

  CHECK(format_from_path("a/b.tsv") == TableFormat::tsv);
  CHECK(format_from_path("a/b.csv") == TableFormat::csv);
  CHECK(parse("\xEF\xBB\xBF" "1,2\n\n3,4\n").d() == 2);
}

TEST_CASE("malformed input") {
  try {
    parse("1,2,3\n4,5\n");
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.line() == 2);
    CHECK_THAT(e.what(), ContainsSubstring("expected 3"));
  }
  try {
    parse("1,2\n3,-3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 2);
    CHECK_THAT(e.what(), ContainsSubstring("negative count"));
  }
  CHECK_THROWS_WITH(parse("1,2.5\n"), ContainsSubstring("not an integer"));
  CHECK_THROWS_WITH(parse("1,abc\n"), ContainsSubstring("non-numeric"));
  CHECK_THROWS_WITH(parse("1,\n"), ContainsSubstring("empty cell"));
  CHECK_THROWS_AS(parse("\n\n"), ShapeError);
  CHECK(parse("-0,1\n").counts(0, 0) == 0.0);
  CHECK_THROWS_AS(load_matrix("/nonexistent/file.csv", {}), InvalidArgument);
}

TEST_CASE("transform and spectrum") {
  std::ostringstream text;
  Rng rng(3);
  const int d = 40, n = 25;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < n; ++j) text << (j ? "," : "") << static_cast<int>(std::floor(50.0 * rng.uniform() * (1 + i % 3)));
    text << "\n";
  }
  const auto m = parse(text.str());
  const auto s = transform_and_spectrum(m);
  CHECK(s.size() == n - 1);
  CHECK(s.structural_zeros() == d - (n - 1));
  CHECK(s.centered());

  Eigen::MatrixXd x = m.transformed();
  const Eigen::VectorXd mean = x.rowwise().mean();
  x.colwise() -= mean;
  CHECK(x.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
  double trace = 0.0;
  for (double v : s.values()) trace += v;
  CHECK_THAT(trace, WithinRel(x.squaredNorm() / n, 1e-10));

  // log10(r + 1) is increasing.
  for (Eigen::Index i = 0; i < m.counts.rows(); ++i)
    for (Eigen::Index j = 0; j + 1 < m.counts.cols(); ++j)
      if (m.counts(i, j) < m.counts(i, j + 1)) CHECK(m.transformed()(i, j) < m.transformed()(i, j + 1));
}

TEST_CASE("shape of a typical positional matrix") {
  ExpressionMatrix em;
  em.counts = Eigen::MatrixXd::Zero(1978, 522);
  Rng rng(8);
  for (Eigen::Index j = 0; j < em.counts.cols(); ++j)
    for (Eigen::Index i = 0; i < em.counts.rows(); ++i) em.counts(i, j) = std::floor(20.0 * rng.uniform());
  const auto s = transform_and_spectrum(em);
  CHECK(s.size() == 521);
  CHECK(s.d() == 1978);
  CHECK(s.n() == 522);
}

TEST_CASE("constant matrices give an all-zero spectrum") {
  const auto s = transform_and_spectrum(parse("5,5,5\n5,5,5\n"));
  CHECK(s.all_zero());
  ExpressionMatrix one;
  one.counts = Eigen::MatrixXd::Ones(3, 1);
  CHECK_THROWS_AS(transform_and_spectrum(one), DegenerateInput);
}
