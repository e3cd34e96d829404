#pragma once

// Closed-form similarity measures between two activation matrices.
//
// Every measure takes two matrices with the same number of rows (examples)
// and returns a scalar. Inputs of any scalar type are promoted to double;
// CKA and the CCA family center columns internally.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "repsim/errors.hpp"
#include "repsim/repstore.hpp"
#include "repsim/types.hpp"

namespace repsim {

/// Relative singular-value cutoff below which a direction counts as rank deficient.
inline constexpr double kRankTolerance = 1e-10;

namespace detail {

template <typename A, typename B>
void require_same_rows(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.rows() != y.rows()) {
    throw ValidationError("row counts differ: " + std::to_string(x.rows()) + " vs " + std::to_string(y.rows()));
  }
}

template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  require_same_rows(x, y);
  if (x.cols() != y.cols()) {
    throw ValidationError("feature dims differ: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()));
  }
}

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

/// Orthonormal basis of the column space of a centered matrix, via
/// Householder QR followed by an SVD of the small R factor.
struct ColumnBasis {
  Eigen::MatrixXd q;           // n x rank
  Eigen::MatrixXd to_weights;  // d x rank, with x * to_weights == q
};

/// Relative singular-value cutoff for inputs of the given scalar type:
/// eps * max(n, d) as in numpy's matrix_rank, never below kRankTolerance.
/// Float32 storage rounding otherwise shows up as spurious rank.
template <typename Scalar>
double rank_tolerance(Index n, Index d) {
  return std::max(kRankTolerance, static_cast<double>(std::numeric_limits<Scalar>::epsilon()) *
                                      static_cast<double>(std::max(n, d)));
}

inline ColumnBasis column_basis(const Eigen::MatrixXd& x, double tolerance = kRankTolerance) {
  const Index n = x.rows();
  const Index d = x.cols();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
  Eigen::MatrixXd r = qr.matrixQR().topRows(d).template triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    while (rank < s.size() && s(rank) > tolerance * s(0)) ++rank;
  }
  ColumnBasis out;
  out.q = q * svd.matrixU().leftCols(rank);
  out.to_weights = svd.matrixV().leftCols(rank) * s.head(rank).cwiseInverse().asDiagonal();
  return out;
}

}  // namespace detail

/// Subtracts each column's mean.
template <typename Derived>
Matrix<typename Derived::Scalar> center_columns(const Eigen::MatrixBase<Derived>& m) {
  return m.rowwise() - m.colwise().mean();
}

inline RepresentationMatrix center_columns(const RepresentationMatrix& m) {
  // center in double, then narrow
  Eigen::MatrixXd centered = center_columns(m.to_f64());
  return RepresentationMatrix(centered.cast<float>(), m.ids());
}

/// Linear CKA: ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on centered inputs,
/// clamped to [0, 1].
template <typename A, typename B>
double linear_cka(const Eigen::MatrixBase<A>& x_in, const Eigen::MatrixBase<B>& y_in) {
  detail::require_same_rows(x_in, y_in);
  if (x_in.rows() < 2) throw ValidationError("linear_cka needs at least 2 rows");
  const Eigen::MatrixXd x = center_columns(x_in.template cast<double>());
  const Eigen::MatrixXd y = center_columns(y_in.template cast<double>());
  const Index n = x.rows();
  double cross, xx, yy;
  if (n < std::max(x.cols(), y.cols())) {
    // Same quantities through n x n Gram matrices.
    const Eigen::MatrixXd kx = x * x.transpose();
    const Eigen::MatrixXd ky = y * y.transpose();
    cross = kx.cwiseProduct(ky).sum();
    xx = kx.norm();
    yy = ky.norm();
  } else {
    cross = (y.transpose() * x).squaredNorm();
    xx = (x.transpose() * x).norm();
    yy = (y.transpose() * y).norm();
  }
  if (xx == 0.0 || yy == 0.0) throw DegenerateInput("linear_cka: matrix is constant after centering");
  return detail::clamp_unit(cross / (xx * yy));
}

inline double linear_cka(const RepresentationMatrix& x, const RepresentationMatrix& y) {
  return linear_cka(x.data(), y.data());
}

/// Canonical correlation analysis of two centered matrices.
struct CcaResult {
  Eigen::VectorXd coeffs;         // rho_1 >= rho_2 >= ..., each in [0, 1]
  Eigen::MatrixXd x_directions;   // d_x x k, column i is w_X^i
  Eigen::MatrixXd projections;    // n x k, column i is h_i = X_c w_X^i (unit norm)
  Eigen::VectorXd pw_weights;     // alpha_i = sum_j |<h_i, x_j>|
};

/// Canonical correlations via orthonormal bases of both centered matrices and
/// an SVD of Q_x^T Q_y. Rank-deficient inputs are truncated to numerical rank.
template <typename A, typename B>
CcaResult cca_coeffs(const Eigen::MatrixBase<A>& x_in, const Eigen::MatrixBase<B>& y_in) {
  detail::require_same_rows(x_in, y_in);
  const Index n = x_in.rows();
  if (n <= x_in.cols() || n <= y_in.cols()) {
    throw InsufficientSamples("CCA needs more rows than columns: n=" + std::to_string(n) + ", d_x=" +
                              std::to_string(x_in.cols()) + ", d_y=" + std::to_string(y_in.cols()));
  }
  const Eigen::MatrixXd x = center_columns(x_in.template cast<double>());
  const Eigen::MatrixXd y = center_columns(y_in.template cast<double>());
  const auto bx = detail::column_basis(x, detail::rank_tolerance<typename A::Scalar>(n, x.cols()));
  const auto by = detail::column_basis(y, detail::rank_tolerance<typename B::Scalar>(n, y.cols()));
  if (bx.q.cols() == 0 || by.q.cols() == 0) throw DegenerateInput("CCA: matrix is constant after centering");

  const Eigen::MatrixXd m = bx.q.transpose() * by.q;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const Index k = std::min(bx.q.cols(), by.q.cols());

  CcaResult r;
  r.coeffs = svd.singularValues().head(k).unaryExpr([](double v) { return detail::clamp_unit(v); });
  const Eigen::MatrixXd u = svd.matrixU().leftCols(k);
  r.x_directions = bx.to_weights * u;
  r.projections = bx.q * u;
  r.pw_weights = (r.projections.transpose() * x).cwiseAbs().rowwise().sum();
  return r;
}

inline CcaResult cca_coeffs(const RepresentationMatrix& x, const RepresentationMatrix& y) {
  return cca_coeffs(x.data(), y.data());
}

/// Mean canonical correlation.
template <typename A, typename B>
double mean_cca(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  return detail::clamp_unit(cca_coeffs(x, y).coeffs.mean());
}

inline double mean_cca(const RepresentationMatrix& x, const RepresentationMatrix& y) {
  return mean_cca(x.data(), y.data());
}

/// Projection-weighted CCA with x as the reference side (asymmetric).
template <typename A, typename B>
double pwcca(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  const CcaResult r = cca_coeffs(x, y);
  const double total = r.pw_weights.sum();
  if (!(total > 0.0)) throw DegenerateInput("pwcca: projection weights sum to zero");
  return detail::clamp_unit(r.pw_weights.dot(r.coeffs) / total);
}

inline double pwcca(const RepresentationMatrix& x, const RepresentationMatrix& y) { return pwcca(x.data(), y.data()); }

/// Projects centered x onto its top-k left singular directions (scaled by
/// singular values), keeping the smallest k whose cumulative squared singular
/// values reach `variance_fraction` of the total.
template <typename Derived>
Eigen::MatrixXd svd_truncate(const Eigen::MatrixBase<Derived>& x_in, double variance_fraction) {
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0)) {
    throw ValidationError("variance_fraction must be in (0, 1]");
  }
  const Eigen::MatrixXd x = center_columns(x_in.template cast<double>());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  const Eigen::VectorXd energy = svd.singularValues().array().square();
  const double total = energy.sum();
  if (!(total > 0.0)) throw DegenerateInput("svcca: matrix is constant after centering");
  Index k = 0;
  double running = 0.0;
  while (k < energy.size()) {
    running += energy(k);
    ++k;
    if (running / total >= variance_fraction - 1e-12) break;
  }
  return svd.matrixU().leftCols(k) * svd.singularValues().head(k).asDiagonal();
}

/// SVCCA: mean CCA of the variance-truncated inputs.
template <typename A, typename B>
double svcca(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, double variance_fraction) {
  detail::require_same_rows(x, y);
  if (x.rows() <= x.cols() || y.rows() <= y.cols()) {
    throw InsufficientSamples("SVCCA needs more rows than columns");
  }
  return mean_cca(svd_truncate(x, variance_fraction), svd_truncate(y, variance_fraction));
}

inline double svcca(const RepresentationMatrix& x, const RepresentationMatrix& y, double variance_fraction) {
  return svcca(x.data(), y.data(), variance_fraction);
}

/// Mean row-wise dot product; rows are L2-normalized first when `normalize`.
template <typename A, typename B>
double dot_sim(const Eigen::MatrixBase<A>& x_in, const Eigen::MatrixBase<B>& y_in, bool normalize = true) {
  detail::require_same_shape(x_in, y_in);
  const Eigen::MatrixXd x = x_in.template cast<double>();
  const Eigen::MatrixXd y = y_in.template cast<double>();
  Eigen::VectorXd dots = x.cwiseProduct(y).rowwise().sum();
  if (normalize) {
    const Eigen::VectorXd nx = x.rowwise().norm();
    const Eigen::VectorXd ny = y.rowwise().norm();
    if ((nx.array() == 0.0).any() || (ny.array() == 0.0).any()) throw DegenerateInput("dot_sim: zero row");
    dots = dots.cwiseQuotient(nx.cwiseProduct(ny));
  }
  return dots.mean();
}

inline double dot_sim(const RepresentationMatrix& x, const RepresentationMatrix& y, bool normalize = true) {
  return dot_sim(x.data(), y.data(), normalize);
}

/// Mean over rows of 1 - || x_i/|x_i| - y_i/|y_i| ||. Lies in [-1, 1]; not clamped.
template <typename A, typename B>
double norm_sim(const Eigen::MatrixBase<A>& x_in, const Eigen::MatrixBase<B>& y_in) {
  detail::require_same_shape(x_in, y_in);
  Eigen::MatrixXd x = x_in.template cast<double>();
  Eigen::MatrixXd y = y_in.template cast<double>();
  const Eigen::VectorXd nx = x.rowwise().norm();
  const Eigen::VectorXd ny = y.rowwise().norm();
  if ((nx.array() == 0.0).any() || (ny.array() == 0.0).any()) throw DegenerateInput("norm_sim: zero row");
  x = nx.cwiseInverse().asDiagonal() * x;
  y = ny.cwiseInverse().asDiagonal() * y;
  return (1.0 - (x - y).rowwise().norm().array()).mean();
}

inline double norm_sim(const RepresentationMatrix& x, const RepresentationMatrix& y) {
  return norm_sim(x.data(), y.data());
}

// --- measure selection -----------------------------------------------------

template <typename Scalar>
struct MlpParams;

enum class MeasureTag { cka, mean_cca, pwcca, svcca, dot, norm, deep_dot, deep_cka, contrasim, contrasim_norm };

std::string to_string(MeasureTag tag);
MeasureTag measure_tag_from_string(const std::string& s);
bool is_deep(MeasureTag tag);

/// A measure plus what it needs to run. Deep measures encode x with
/// `encoder` and y with `encoder_y` (or `encoder` when unset).
struct MeasureKind {
  MeasureTag tag = MeasureTag::cka;
  std::optional<double> variance_fraction;      // svcca only
  bool normalize_dot = true;                    // dot only
  std::shared_ptr<const MlpParams<float>> encoder;
  std::shared_ptr<const MlpParams<float>> encoder_y;

  /// Throws ConfigError when required parameters are missing.
  void validate() const;
};

/// Scores two matrices that are already in the measure's comparison space:
/// raw activations for closed-form tags, encoder outputs for deep tags.
double closed_form_score(const MeasureKind& kind, const ConstMatrixRef& x, const ConstMatrixRef& y);

/// Routes to the matching measure. pwcca treats x as the reference side.
double measure_dispatch(const MeasureKind& kind, const RepresentationMatrix& x, const RepresentationMatrix& y);

}  // namespace repsim
