#include "avilab/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avilab {

namespace {

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(msg.str());
  }
}

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << what << ": matrix is " << a.rows() << "x" << a.cols() << ", not square";
    throw DimensionError(msg.str());
  }
}

}  // namespace

DiagGaussian::DiagGaussian(Vector mean_in, Vector log_std_in)
    : mean(std::move(mean_in)), log_std(std::move(log_std_in)) {
  require_same_size(mean.size(), log_std.size(), "DiagGaussian");
  if (!log_std.allFinite()) {
    throw std::invalid_argument("DiagGaussian: log_std must be finite");
  }
}

DiagGaussian DiagGaussian::standard(Eigen::Index dim) {
  return DiagGaussian(Vector::Zero(dim), Vector::Zero(dim));
}

double diag_log_density(const DiagGaussian& g, const Vector& point) {
  require_same_size(g.dim(), point.size(), "diag_log_density");
  double total = 0.0;
  for (Eigen::Index d = 0; d < g.dim(); ++d) {
    const double u = (point[d] - g.mean[d]) * std::exp(-g.log_std[d]);
    total += -kHalfLog2Pi - g.log_std[d] - 0.5 * u * u;
  }
  return total;
}

Vector reparam_sample(const DiagGaussian& g, const Vector& noise) {
  require_same_size(g.dim(), noise.size(), "reparam_sample");
  return g.mean + (g.log_std.array().exp() * noise.array()).matrix();
}

double symmetry_defect(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

DenseGaussian::DenseGaussian(Vector mean_in, Matrix precision_in)
    : mean(std::move(mean_in)), precision(std::move(precision_in)) {
  require_square(precision, "DenseGaussian");
  require_same_size(mean.size(), precision.rows(), "DenseGaussian");
  if (symmetry_defect(precision) > 1e-12) {
    throw std::invalid_argument("DenseGaussian: precision is not symmetric");
  }
  Cholesky check(precision);  // throws NotPositiveDefinite
}

Matrix DenseGaussian::covariance() const { return spd_inverse(precision); }

Vector DenseGaussian::marginal_variances() const {
  return spd_inverse_diagonal(precision);
}

double DenseGaussian::log_density(const Vector& point) const {
  require_same_size(point.size(), dim(), "DenseGaussian::log_density");
  Cholesky chol(precision);
  const Vector delta = point - mean;
  const double quad = delta.dot(precision * delta);
  return -kHalfLog2Pi * static_cast<double>(dim()) + 0.5 * chol.log_determinant() - 0.5 * quad;
}

SymTridiag::SymTridiag(Vector diag_in, Vector offdiag_in)
    : diag(std::move(diag_in)), offdiag(std::move(offdiag_in)) {
  const Eigen::Index expected = diag.size() > 0 ? diag.size() - 1 : 0;
  require_same_size(offdiag.size(), expected, "SymTridiag off-diagonal");
}

Matrix SymTridiag::to_dense() const {
  const Eigen::Index n = dim();
  Matrix out = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = diag[i];
    if (i + 1 < n) {
      out(i, i + 1) = offdiag[i];
      out(i + 1, i) = offdiag[i];
    }
  }
  return out;
}

Vector SymTridiag::multiply(const Vector& v) const {
  require_same_size(v.size(), dim(), "SymTridiag::multiply");
  const Eigen::Index n = dim();
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = diag[i] * v[i];
    if (i > 0) acc += offdiag[i - 1] * v[i - 1];
    if (i + 1 < n) acc += offdiag[i] * v[i + 1];
    out[i] = acc;
  }
  return out;
}

Cholesky::Cholesky(const Matrix& a) {
  require_square(a, "Cholesky");
  const Eigen::Index n = a.rows();
  lower_ = Matrix::Zero(n, n);
  if (n == 0) return;
  const double max_diag = a.diagonal().maxCoeff();
  const double threshold = 1e-12 * std::max(max_diag, 0.0);
  RowMatrix work = RowMatrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = a(j, j) - work.row(j).head(j).squaredNorm();
    if (!(pivot > threshold)) {
      std::ostringstream msg;
      msg << "matrix is not positive definite: pivot " << pivot << " at index " << j;
      throw NotPositiveDefinite(msg.str());
    }
    const double root = std::sqrt(pivot);
    work(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      work(i, j) = (a(i, j) - work.row(i).head(j).dot(work.row(j).head(j))) / root;
    }
  }
  lower_ = work;
}

Vector Cholesky::solve(const Vector& b) const {
  require_same_size(b.size(), lower_.rows(), "Cholesky::solve");
  const auto l = lower_.triangularView<Eigen::Lower>();
  Vector y = l.solve(b);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix Cholesky::inverse() const {
  const Eigen::Index n = lower_.rows();
  const Matrix linv = lower_.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return linv.transpose() * linv;
}

Vector Cholesky::inverse_diagonal() const {
  const Eigen::Index n = lower_.rows();
  const Matrix linv = lower_.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  return linv.colwise().squaredNorm().transpose();
}

double Cholesky::log_determinant() const {
  return 2.0 * lower_.diagonal().array().log().sum();
}

Vector spd_solve(const Matrix& a, const Vector& b) {
  require_square(a, "spd_solve");
  require_same_size(a.rows(), b.size(), "spd_solve");
  return Cholesky(a).solve(b);
}

Vector spd_inverse_diagonal(const Matrix& a) { return Cholesky(a).inverse_diagonal(); }

Matrix spd_inverse(const Matrix& a) { return Cholesky(a).inverse(); }

Matrix sherman_morrison_inverse(double beta, double alpha, int n) {
  if (n < 1) throw std::invalid_argument("sherman_morrison_inverse: n must be positive");
  const double denom = beta + n * alpha;
  if (beta == 0.0 || denom == 0.0) {
    throw std::domain_error("sherman_morrison_inverse: singular configuration");
  }
  const double rank_one = alpha / (beta * denom);
  Matrix out = Matrix::Constant(n, n, -rank_one);
  out.diagonal().array() += 1.0 / beta;
  return out;
}

Vector tridiag_solve(const SymTridiag& t, const Vector& b) {
  const Eigen::Index n = t.dim();
  require_same_size(b.size(), n, "tridiag_solve");
  if (n == 0) return Vector();
  const double threshold = 1e-12 * std::max(t.diag.maxCoeff(), 0.0);
  // T = L D L^T with unit lower bidiagonal L.
  Vector d(n);
  Vector l(n > 1 ? n - 1 : 0);
  d[0] = t.diag[0];
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) {
      l[i - 1] = t.offdiag[i - 1] / d[i - 1];
      d[i] = t.diag[i] - l[i - 1] * t.offdiag[i - 1];
    }
    if (!(d[i] > threshold)) {
      std::ostringstream msg;
      msg << "tridiagonal matrix is not positive definite: pivot " << d[i] << " at index " << i;
      throw NotPositiveDefinite(msg.str());
    }
  }
  Vector y = b;
  for (Eigen::Index i = 1; i < n; ++i) y[i] -= l[i - 1] * y[i - 1];
  for (Eigen::Index i = 0; i < n; ++i) y[i] /= d[i];
  for (Eigen::Index i = n - 2; i >= 0; --i) y[i] -= l[i] * y[i + 1];
  return y;
}

}  // namespace avilab
