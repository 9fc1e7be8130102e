#pragma once

// Read-count matrices: parsing, the shifted-log transform and spectra.
//
// Layout: rows are positions (variables), columns are samples. Cells are
// nonnegative base-10 integers.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "spikes/error.hpp"
#include "spikes/spectrum.hpp"

namespace spikes {

enum class TableFormat { csv, tsv };

struct LoadOptions {
  TableFormat format = TableFormat::csv;
  bool has_header = false;
  bool has_rownames = false;
  bool transpose = false; // file rows are samples
};

struct ExpressionMatrix {
  std::string gene_id;
  Eigen::MatrixXd counts; // d × n, exact integers
  std::vector<std::string> row_names;
  std::vector<std::string> column_names;

  std::size_t d() const noexcept { return static_cast<std::size_t>(counts.rows()); }
  std::size_t n() const noexcept { return static_cast<std::size_t>(counts.cols()); }

  /// x_ij = log10(r_ij + 1).
  Eigen::MatrixXd transformed() const {
    return counts.unaryExpr([](double r) { return std::log10(r + 1.0); });
  }
};

/// Format from the file extension: .tsv/.tab/.txt are tab-separated, anything else CSV.
inline TableFormat format_from_path(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".tsv" || ext == ".tab" || ext == ".txt") return TableFormat::tsv;
  return TableFormat::csv;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::string unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline double parse_count(std::string_view cell, std::size_t line, std::size_t column) {
  std::string_view s = trim(cell);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = trim(s.substr(1, s.size() - 2));
  if (s.empty()) throw ParseError("empty cell", line, column);
  if (s.front() == '+') s.remove_prefix(1);
  if (!s.empty() && s.front() == '-') {
    // "-0" is still a count of zero.
    if (s.find_first_not_of('0', 1) == std::string_view::npos && s.size() > 1) return 0.0;
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && p == s.data() + s.size()) throw ParseError("negative count", line, column);
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line, column);
  }
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc::result_out_of_range) throw ParseError("count out of range", line, column);
  if (ec != std::errc() || p != s.data() + s.size()) {
    double dv = 0.0;
    const auto [pd, ecd] = std::from_chars(s.data(), s.data() + s.size(), dv);
    if (ecd == std::errc() && pd == s.data() + s.size())
      throw ParseError("count is not an integer", line, column);
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line, column);
  }
  if (v > (std::uint64_t{1} << 53)) throw ParseError("count out of range", line, column);
  return static_cast<double>(v);
}

} // namespace detail

/// Parses a count table from a stream. Errors carry 1-based line and column.
inline ExpressionMatrix parse_matrix(std::istream& in, const LoadOptions& opt, std::string gene_id = {}) {
  const char sep = opt.format == TableFormat::tsv ? '\t' : ',';
  ExpressionMatrix em;
  em.gene_id = std::move(gene_id);
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t first_data_line = 0;
  bool header_pending = opt.has_header;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, sep);
    if (header_pending) {
      header_pending = false;
      for (std::size_t j = opt.has_rownames ? 1 : 0; j < fields.size(); ++j)
        em.column_names.push_back(detail::unquote(fields[j]));
      continue;
    }
    const std::size_t skip = opt.has_rownames ? 1 : 0;
    if (fields.size() <= skip) throw ShapeError("row has no values", lineno);
    const std::size_t w = fields.size() - skip;
    if (rows.empty()) {
      width = w;
      first_data_line = lineno;
    } else if (w != width) {
      throw ShapeError("row has " + std::to_string(w) + " values, expected " + std::to_string(width) +
                           " as on line " + std::to_string(first_data_line),
                       lineno);
    }
    if (opt.has_rownames) em.row_names.push_back(detail::unquote(fields[0]));
    std::vector<double> row(w);
    for (std::size_t j = 0; j < w; ++j) row[j] = detail::parse_count(fields[j + skip], lineno, j + skip + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ShapeError("no data rows", lineno);
  if (!em.column_names.empty() && em.column_names.size() != width)
    throw ShapeError("header has " + std::to_string(em.column_names.size()) + " names for " +
                         std::to_string(width) + " columns",
                     1);

  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(width);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (opt.transpose) {
    em.counts = m.transpose();
    std::swap(em.row_names, em.column_names);
  } else {
    em.counts = std::move(m);
  }
  return em;
}

/// Loads a count table; the gene id is the file name without extension.
inline ExpressionMatrix load_matrix(const std::filesystem::path& path, const LoadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open input file '" + path.string() + "'");
  return parse_matrix(in, opt, path.stem().string());
}

/// Spectrum of S_n = (1/n) X Xᵀ for the transformed matrix with each position
/// centered across samples. A constant matrix gives an all-zero spectrum.
inline EigenSpectrum transform_and_spectrum(const ExpressionMatrix& em) {
  if (em.n() < 2) throw DegenerateInput("need at least 2 samples");
  return sample_cov_spectrum(em.transformed(), true);
}

} // namespace spikes
