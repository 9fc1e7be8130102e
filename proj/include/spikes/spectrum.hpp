#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "spikes/error.hpp"

namespace spikes {

/// Descending eigenvalues of S = (1/n) X Xᵀ for a d × n data matrix.
///
/// Only the eigenvalues that can be nonzero are stored: min(d, n) of them,
/// or min(d, n − 1) when the rows were mean-centered. The remaining
/// d − size() eigenvalues are structural zeros and are accounted for by
/// structural_zeros().
class EigenSpectrum {
public:
  EigenSpectrum() = default;

  EigenSpectrum(std::vector<double> values, std::size_t d, std::size_t n, bool centered = false)
      : values_(std::move(values)), d_(d), n_(n), centered_(centered) {
    if (d_ < 1 || n_ < 1) throw InvalidArgument("spectrum needs d >= 1 and n >= 1");
    if (values_.size() > d_ || values_.size() > n_)
      throw InvalidArgument("spectrum has more eigenvalues than min(d, n)");
    for (auto& v : values_) {
      if (!std::isfinite(v)) throw InvalidArgument("spectrum contains a non-finite eigenvalue");
      if (v < 0.0) {
        if (v < -1e-10) throw InvalidArgument("spectrum contains a negative eigenvalue");
        v = 0.0;
      }
    }
    std::sort(values_.begin(), values_.end(), std::greater<>());
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t d() const noexcept { return d_; }
  std::size_t n() const noexcept { return n_; }
  bool centered() const noexcept { return centered_; }
  double aspect_ratio() const noexcept { return static_cast<double>(d_) / static_cast<double>(n_); }
  std::size_t structural_zeros() const noexcept { return d_ - values_.size(); }

  /// λ̂_m with 1-based m.
  double operator[](std::size_t m) const { return values_.at(m - 1); }

  /// Spectrum of the noise block left after removing the k largest
  /// eigenvalues: dimension d − k, same n.
  EigenSpectrum drop_top(std::size_t k) const {
    if (k >= values_.size()) throw EmptyTail("no eigenvalues remain after dropping " + std::to_string(k));
    EigenSpectrum out;
    out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(k), values_.end());
    out.d_ = d_ - k;
    out.n_ = n_;
    out.centered_ = centered_;
    return out;
  }

  EigenSpectrum scaled(double c) const {
    EigenSpectrum out = *this;
    for (auto& v : out.values_) v *= c;
    return out;
  }

  bool all_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

private:
  std::vector<double> values_;
  std::size_t d_ = 0;
  std::size_t n_ = 0;
  bool centered_ = false;
};

namespace detail {

/// Gram matrix of the smaller side: (1/n) Wᵀ W if d > n, else (1/n) W Wᵀ.
/// Only the lower triangle is filled.
inline void small_gram(const Eigen::MatrixXd& w, Eigen::MatrixXd& gram) {
  const auto d = w.rows();
  const auto n = w.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d > n) {
    gram.setZero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(w.transpose(), inv_n);
  } else {
    gram.setZero(d, d);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(w, inv_n);
  }
}

inline double full_top_eigenvalue(const Eigen::MatrixXd& lower) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lower, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(lower.rows() - 1);
}

// Last component of the unit eigenvector of a symmetric tridiagonal matrix
// for eigenvalue theta, by two steps of shifted inverse iteration.
inline double tridiagonal_last_component(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double theta) {
  const Eigen::Index m = diag.size();
  if (m == 1) return 1.0;
  const double shift = theta + 1e-12 * std::max(1.0, std::fabs(theta));
  Eigen::VectorXd x = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd c(m);
  Eigen::VectorXd r(m);
  for (int pass = 0; pass < 2; ++pass) {
    // Thomas algorithm on (T - shift I) x_new = x.
    double piv = diag(0) - shift;
    if (piv == 0.0) piv = 1e-300;
    c(0) = sub(0) / piv;
    r(0) = x(0) / piv;
    for (Eigen::Index i = 1; i < m; ++i) {
      piv = (diag(i) - shift) - sub(i - 1) * c(i - 1);
      if (piv == 0.0) piv = 1e-300;
      if (i + 1 < m) c(i) = sub(i) / piv;
      r(i) = (x(i) - sub(i - 1) * r(i - 1)) / piv;
    }
    x(m - 1) = r(m - 1);
    for (Eigen::Index i = m - 2; i >= 0; --i) x(i) = r(i) - c(i) * x(i + 1);
    const double norm = x.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return 1.0; // forces another iteration
    x /= norm;
  }
  return x(m - 1);
}

} // namespace detail

struct TopEigenOptions {
  double residual_tol = 1e-10; // relative to the eigenvalue
  int max_iter = 300;
  int dense_below = 48;        // use the full decomposition for small matrices
};

/// Largest eigenvalue of a symmetric matrix given by its lower triangle.
///
/// Lanczos with full reorthogonalization; the Ritz residual ‖Av − θv‖ is
/// checked against residual_tol·θ. Falls back to a full decomposition if
/// the iteration does not meet the tolerance.
inline double top_eigenvalue(const Eigen::MatrixXd& lower, const TopEigenOptions& opt = {}) {
  const Eigen::Index n = lower.rows();
  if (n == 0) throw InvalidArgument("empty matrix");
  if (n <= opt.dense_below) return detail::full_top_eigenvalue(lower);

  const auto a = lower.selfadjointView<Eigen::Lower>();
  const int kmax = static_cast<int>(std::min<Eigen::Index>(opt.max_iter, n));
  Eigen::MatrixXd basis(n, kmax + 1);
  std::vector<double> alpha;
  std::vector<double> beta;
  alpha.reserve(kmax);
  beta.reserve(kmax);

  // Deterministic start vector with no special alignment.
  Eigen::VectorXd v(n);
  std::uint64_t state = 0x243F6A8885A308D3ULL;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    v(i) = 0.5 + static_cast<double>((z ^ (z >> 31)) >> 11) * 0x1.0p-53;
  }
  basis.col(0) = v.normalized();

  Eigen::VectorXd w(n);
  for (int k = 0; k < kmax; ++k) {
    w.noalias() = a * basis.col(k);
    alpha.push_back(basis.col(k).dot(w));
    // Two passes of classical Gram–Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd coef = basis.leftCols(k + 1).transpose() * w;
      w.noalias() -= basis.leftCols(k + 1) * coef;
    }
    const double b = w.norm();

    const bool check = (k + 1 >= 10 && (k + 1) % 5 == 0) || k + 1 == kmax || b == 0.0;
    if (check) {
      const int m = k + 1;
      Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
      Eigen::VectorXd sub(std::max(m - 1, 0));
      for (int i = 0; i + 1 < m; ++i) sub(i) = beta[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
      const double theta = tri.eigenvalues()(m - 1);
      const double resid = std::fabs(b * detail::tridiagonal_last_component(diag, sub, theta));
      if (resid <= opt.residual_tol * std::fabs(theta) || b == 0.0) return theta;
    }
    if (b == 0.0) break;
    beta.push_back(b);
    basis.col(k + 1) = w / b;
  }
  return detail::full_top_eigenvalue(lower);
}

/// All eigenvalues of (1/n) W Wᵀ that can be nonzero, descending.
inline std::vector<double> gram_eigenvalues(const Eigen::MatrixXd& w) {
  Eigen::MatrixXd gram;
  detail::small_gram(w, gram);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::reverse(out.begin(), out.end());
  return out;
}

/// Spectrum of S = (1/n) X Xᵀ, optionally after subtracting each row's mean.
inline EigenSpectrum sample_cov_spectrum(const Eigen::MatrixXd& x, bool center) {
  const auto d = static_cast<std::size_t>(x.rows());
  const auto n = static_cast<std::size_t>(x.cols());
  if (d < 1) throw DegenerateInput("data matrix has no rows");
  if (n < 2) throw DegenerateInput("sample covariance needs n >= 2 columns");

  std::vector<double> vals;
  if (center) {
    Eigen::MatrixXd xc = x.colwise() - x.rowwise().mean();
    // A constant row centers to exact zeros, not rounding residue.
    for (Eigen::Index i = 0; i < xc.rows(); ++i)
      if (x.row(i).maxCoeff() == x.row(i).minCoeff()) xc.row(i).setZero();
    vals = gram_eigenvalues(xc);
  } else {
    vals = gram_eigenvalues(x);
  }
  const std::size_t keep = std::min(d, n - (center ? 1 : 0));
  vals.resize(keep);
  // Negative values here are rounding noise on (near) rank-deficient inputs.
  for (auto& v : vals) v = std::max(v, 0.0);
  return EigenSpectrum(std::move(vals), d, n, center);
}

} // namespace spikes
