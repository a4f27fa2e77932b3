#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace avilab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Site-indexed storage: one row per site.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

/// Largest dimension the dense oracle linear algebra accepts.
inline constexpr Eigen::Index kDenseLimit = 2000;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a symmetric factorization meets a pivot at or below
/// 1e-12 times the largest diagonal entry.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/**
 * Diagonal Gaussian parameterized by mean and log standard deviation.
 *
 * Every variational factor in the library is one of these. The log-scale
 * parameterization keeps the scale positive under unconstrained updates.
 */
struct DiagGaussian {
  Vector mean;
  Vector log_std;

  DiagGaussian() = default;
  DiagGaussian(Vector mean, Vector log_std);

  static DiagGaussian standard(Eigen::Index dim);

  Eigen::Index dim() const { return mean.size(); }
  Vector std_dev() const { return log_std.array().exp().matrix(); }
  Vector variance() const { return (2.0 * log_std.array()).exp().matrix(); }

  bool operator==(const DiagGaussian& other) const {
    return mean == other.mean && log_std == other.log_std;
  }
};

double diag_log_density(const DiagGaussian& g, const Vector& point);

/// mean + exp(log_std) * noise, elementwise.
Vector reparam_sample(const DiagGaussian& g, const Vector& noise);

/// Gaussian stored as mean and precision; the exact-posterior representation.
struct DenseGaussian {
  Vector mean;
  Matrix precision;

  DenseGaussian() = default;
  DenseGaussian(Vector mean, Matrix precision);

  Eigen::Index dim() const { return mean.size(); }
  Matrix covariance() const;
  Vector marginal_variances() const;
  double log_density(const Vector& point) const;
};

/// Symmetric tridiagonal matrix: diag has length D, offdiag length D-1.
struct SymTridiag {
  Vector diag;
  Vector offdiag;

  SymTridiag() = default;
  SymTridiag(Vector diag, Vector offdiag);

  Eigen::Index dim() const { return diag.size(); }
  Matrix to_dense() const;
  Vector multiply(const Vector& v) const;
};

/// Dense Cholesky factorization A = L L^T with the scale-aware pivot rule.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a);

  const Matrix& lower() const { return lower_; }
  Vector solve(const Vector& b) const;
  Matrix inverse() const;
  /// Diagonal of A^{-1} without forming the full inverse product.
  Vector inverse_diagonal() const;
  double log_determinant() const;

 private:
  Matrix lower_;
};

Vector spd_solve(const Matrix& a, const Vector& b);
Vector spd_inverse_diagonal(const Matrix& a);
Matrix spd_inverse(const Matrix& a);

/// Closed-form inverse of beta*I + alpha*11^T (n x n).
Matrix sherman_morrison_inverse(double beta, double alpha, int n);

/// Solves T x = b for SPD tridiagonal T via an LDL^T sweep.
Vector tridiag_solve(const SymTridiag& t, const Vector& b);

/// Relative symmetry defect max|A - A^T| / max(1, max|A|).
double symmetry_defect(const Matrix& a);

}  // namespace avilab
