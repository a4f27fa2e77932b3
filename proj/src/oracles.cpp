#include "avilab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace avilab {

namespace {

void require_scalar_sites(const Dataset& data, int min_n) {
  data.validate();
  if (data.x_dim() != 1) throw DimensionError("oracle expects scalar observations");
  if (data.size() < min_n) {
    throw std::invalid_argument("oracle needs N >= " + std::to_string(min_n));
  }
}

void require_scales(double tau, double sigma) {
  if (!(tau > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("tau and sigma must be positive");
}

DiagGaussian scalar_gaussian(double mean, double var) {
  return DiagGaussian(Vector::Constant(1, mean), Vector::Constant(1, 0.5 * std::log(var)));
}

}  // namespace

FactorizedState to_state(const FviOptimum& opt) {
  FactorizedState state;
  state.q_theta = opt.q_theta_star ? *opt.q_theta_star : DiagGaussian(Vector(0), Vector(0));
  state.q_z.reserve(static_cast<std::size_t>(opt.site_means.size()));
  for (Eigen::Index n = 0; n < opt.site_means.size(); ++n) {
    state.q_z.push_back(scalar_gaussian(opt.site_means[n], opt.site_vars[n]));
  }
  return state;
}

FviOptimum linear_fvi_optimum(const Dataset& data, double tau, double sigma) {
  require_scalar_sites(data, 2);
  require_scales(tau, sigma);
  const Eigen::Index n = data.size();
  const double s2 = sigma * sigma;
  const double xbar = data.x.col(0).mean();
  FviOptimum opt;
  opt.site_means = (tau / (s2 + tau * tau)) * (data.x.col(0).array() - xbar).matrix();
  opt.site_vars = Vector::Constant(n, s2 / (s2 + tau * tau));
  opt.q_theta_star = scalar_gaussian(xbar, s2 / static_cast<double>(n));
  return opt;
}

DenseGaussian linear_exact_posterior(const Dataset& data, double tau, double sigma) {
  require_scalar_sites(data, 2);
  require_scales(tau, sigma);
  const Eigen::Index n = data.size();
  if (n + 1 > kDenseLimit) throw std::invalid_argument("dense oracle limited to N < 2000");
  const double inv_s2 = 1.0 / (sigma * sigma);
  // -log p(theta, z | x) = 1/2 [sum z_n^2 + sum (x_n - theta - tau z_n)^2 / sigma^2] + const
  Matrix phi = Matrix::Zero(n + 1, n + 1);
  Vector h(n + 1);
  phi(0, 0) = static_cast<double>(n) * inv_s2;
  h[0] = data.x.col(0).sum() * inv_s2;
  for (Eigen::Index i = 1; i <= n; ++i) {
    phi(0, i) = phi(i, 0) = tau * inv_s2;
    phi(i, i) = 1.0 + tau * tau * inv_s2;
    h[i] = tau * data.x(i - 1, 0) * inv_s2;
  }
  Vector mean = spd_solve(phi, h);
  return DenseGaussian(std::move(mean), std::move(phi));
}

RankOnePrecision linear_z_marginal_precision(int n, double tau, double sigma) {
  require_scales(tau, sigma);
  if (n < 2) throw std::invalid_argument("z-marginal precision needs N >= 2");
  const double r = tau * tau / (sigma * sigma);
  return {1.0 + r, -r / static_cast<double>(n)};
}

double cavi_residual(const Model& model, const FactorizedState& candidate, const Dataset& data) {
  const auto* linear = dynamic_cast<const LinearModel*>(&model);
  if (!linear) throw std::invalid_argument("cavi_residual: closed-form updates exist for the linear model only");
  check_binding(candidate, model, data);
  const double tau = linear->tau();
  const double s2 = linear->sigma() * linear->sigma();
  const Eigen::Index n = data.size();
  const double m_theta = candidate.q_theta.mean[0];

  double worst = 0.0;
  const auto compare = [&](const DiagGaussian& g, double mean, double precision) {
    worst = std::max(worst, std::abs(g.mean[0] - mean));
    worst = std::max(worst, std::abs(g.log_std[0] + 0.5 * std::log(precision)));
  };
  double resid_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& g = candidate.q_z[static_cast<std::size_t>(i)];
    compare(g, tau * (data.x(i, 0) - m_theta) / (s2 + tau * tau), 1.0 + tau * tau / s2);
    resid_sum += data.x(i, 0) - tau * g.mean[0];
  }
  compare(candidate.q_theta, resid_sum / static_cast<double>(n), static_cast<double>(n) / s2);
  return worst;
}

SymTridiag hmm_posterior_precision(int n, bool anchored) {
  if (n < 2) throw std::invalid_argument("HMM oracle needs N >= 2");
  // Each transition (z_k - z_{k-1})^2 adds 1 to both diagonals and -1 off
  // the diagonal; each emission adds 1; the anchor adds 1 to z_0.
  Vector diag = Vector::Constant(n, 3.0);
  diag[n - 1] = 2.0;
  if (!anchored) diag[0] = 2.0;
  return SymTridiag(std::move(diag), Vector::Constant(n - 1, -1.0));
}

DenseGaussian hmm_exact_posterior(const HmmModel& model, const Dataset& data) {
  if (model.learns_theta()) throw std::invalid_argument("HMM oracle requires theta held fixed");
  require_scalar_sites(data, 2);
  const int n = static_cast<int>(data.size());
  if (n > kDenseLimit) throw std::invalid_argument("dense oracle limited to N <= 2000");
  const SymTridiag precision = hmm_posterior_precision(n, model.anchored());
  const Vector b = (data.x.col(0).array() - model.theta_hat()).matrix();
  Vector mean = tridiag_solve(precision, b);
  return DenseGaussian(std::move(mean), precision.to_dense());
}

FviOptimum hmm_fvi_optimum(const HmmModel& model, const Dataset& data) {
  const DenseGaussian post = hmm_exact_posterior(model, data);
  FviOptimum opt;
  opt.site_means = post.mean;
  opt.site_vars = post.precision.diagonal().cwiseInverse();
  return opt;
}

DiagGaussian saw_cavi_factor(const SawModel& model, const Dataset& data,
                             const DiagGaussian& q_theta, int n) {
  require_scalar_sites(data, 1);
  if (n < 0 || n >= data.size()) throw std::out_of_range("site " + std::to_string(n));
  if (model.is_edge_site(n)) {
    throw EdgeSiteError("saw CAVI factor requested for edge site " + std::to_string(n));
  }
  if (q_theta.dim() != 1) throw DimensionError("saw q_theta must be scalar");
  const double a = model.alpha();
  const double precision = 1.0 + a * a;
  const double mean =
      (model.previous_x(data, n) + a * (data.x(n, 0) - a * q_theta.mean[0])) / precision;
  return scalar_gaussian(mean, 1.0 / precision);
}

FviOptimum saw_fvi_optimum(const SawModel& model, const Dataset& data) {
  require_scalar_sites(data, 1);
  const Eigen::Index n = data.size();
  const double a = model.alpha();
  const double a2 = a * a;
  const double site_prec = 1.0 + a2;
  const double theta_prec = 1.0 + static_cast<double>(n) * a2;
  Vector h(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h[i] = model.previous_x(data, static_cast<int>(i)) + a * data.x(i, 0);
  }
  const double h_theta = a * data.x.col(0).sum();
  // Eliminate the site means from the coupled fixed-point equations.
  const double m_theta = (h_theta - a2 * h.sum() / site_prec) /
                         (theta_prec - static_cast<double>(n) * a2 * a2 / site_prec);
  FviOptimum opt;
  opt.site_means = ((h.array() - a2 * m_theta) / site_prec).matrix();
  opt.site_vars = Vector::Constant(n, 1.0 / site_prec);
  opt.q_theta_star = scalar_gaussian(m_theta, 1.0 / theta_prec);
  return opt;
}

namespace {

bool windows_match(const Dataset& data, int window, int n, int m, double tol) {
  for (int k = 0; k < window; ++k) {
    for (Eigen::Index d = 0; d < data.x_dim(); ++d) {
      if (std::abs(data.x(n - k, d) - data.x(m - k, d)) > tol) return false;
    }
  }
  return true;
}

}  // namespace

ProbeResult well_posedness_probe(const FviOptimum& opt, const Dataset& data, int window,
                                 double input_tol, double target_tol) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (opt.site_means.size() != data.size() || opt.site_vars.size() != data.size()) {
    throw DimensionError("optimum and dataset disagree on N");
  }
  const int n_sites = static_cast<int>(data.size());
  ProbeResult result;
  for (int n = window - 1; n < n_sites; ++n) {
    for (int m = n + 1; m < n_sites; ++m) {
      if (!windows_match(data, window, n, m, input_tol)) continue;
      if (std::abs(opt.site_means[n] - opt.site_means[m]) > target_tol ||
          std::abs(opt.site_vars[n] - opt.site_vars[m]) > target_tol) {
        result.well_posed = false;
        result.witness = std::make_pair(n, m);
        return result;
      }
    }
  }
  return result;
}

std::vector<int> input_classes(const Dataset& data, int window) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  const int n_sites = static_cast<int>(data.size());
  std::vector<int> out(static_cast<std::size_t>(n_sites));
  std::map<std::vector<double>, int> seen;
  int next = 0;
  for (int n = 0; n < n_sites; ++n) {
    if (n < window - 1) {
      out[static_cast<std::size_t>(n)] = next++;
      continue;
    }
    std::vector<double> key;
    for (int row = n - window + 1; row <= n; ++row) {
      for (Eigen::Index d = 0; d < data.x_dim(); ++d) key.push_back(data.x(row, d));
    }
    const auto [it, inserted] = seen.emplace(std::move(key), next);
    if (inserted) ++next;
    out[static_cast<std::size_t>(n)] = it->second;
  }
  return out;
}

double amortization_gap_bound(const Matrix& precision, const Vector& b,
                              const std::vector<int>& class_of) {
  const Eigen::Index n = precision.rows();
  if (precision.cols() != n || b.size() != n || static_cast<Eigen::Index>(class_of.size()) != n) {
    throw DimensionError("amortization_gap_bound: inconsistent sizes");
  }
  // ELBO of a mean-field Gaussian (m, v) up to a constant:
  //   -1/2 m^T P m + b^T m - 1/2 sum P_nn v_n + 1/2 sum log v_n.
  const Vector m_f = spd_solve(precision, b);
  double elbo_f = 0.5 * b.dot(m_f);
  for (Eigen::Index i = 0; i < n; ++i) elbo_f += -0.5 - 0.5 * std::log(precision(i, i));

  const int classes = *std::max_element(class_of.begin(), class_of.end()) + 1;
  Matrix a = Matrix::Zero(n, classes);
  Vector count = Vector::Zero(classes);
  Vector diag_sum = Vector::Zero(classes);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = class_of[static_cast<std::size_t>(i)];
    if (c < 0) throw std::invalid_argument("class ids must be non-negative");
    a(i, c) = 1.0;
    count[c] += 1.0;
    diag_sum[c] += precision(i, i);
  }
  const Vector atb = a.transpose() * b;
  const Vector beta = spd_solve(a.transpose() * precision * a, atb);
  double elbo_a = 0.5 * atb.dot(beta);
  for (int c = 0; c < classes; ++c) {
    if (count[c] == 0.0) continue;
    elbo_a += -0.5 * count[c] + 0.5 * count[c] * std::log(count[c] / diag_sum[c]);
  }
  return elbo_f - elbo_a;
}

}  // namespace avilab
