#include "avilab/elbo.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace avilab {

NoiseBlock NoiseBlock::generate(int samples, int theta_dim, int sites, int z_dim,
                                std::uint64_t seed, Stream stream, std::uint64_t index) {
  if (samples < 1) throw std::invalid_argument("noise block needs at least one sample");
  if (theta_dim < 0 || sites < 1 || z_dim < 1) throw std::invalid_argument("bad noise block dims");
  NoiseBlock block;
  block.samples = samples;
  block.theta_dim = theta_dim;
  block.sites = sites;
  block.z_dim = z_dim;
  block.seed = seed;
  block.draws.resize(samples, theta_dim + static_cast<Eigen::Index>(sites) * z_dim);
  Engine engine = make_engine(seed, stream, index);
  StandardNormal normal;
  normal.fill(engine, block.draws.data(), static_cast<std::size_t>(block.draws.size()));
  return block;
}

NoiseBlock NoiseBlock::generate(int samples, const Model& model, const Dataset& data,
                                std::uint64_t seed, Stream stream, std::uint64_t index) {
  return generate(samples, model.theta_dim(), static_cast<int>(data.size()), model.z_dim(), seed,
                  stream, index);
}

namespace {

void check_noise(const Model& model, const Dataset& data, const NoiseBlock& noise) {
  if (noise.theta_dim != model.theta_dim() || noise.sites != data.size() ||
      noise.z_dim != model.z_dim() || noise.samples < 1 || noise.draws.rows() != noise.samples ||
      noise.draws.cols() != noise.theta_dim + static_cast<Eigen::Index>(noise.sites) * noise.z_dim) {
    std::ostringstream msg;
    msg << "noise block " << noise.samples << "x(" << noise.theta_dim << "+" << noise.sites << "*"
        << noise.z_dim << ") does not fit model " << model.name() << " with N=" << data.size();
    throw DimensionError(msg.str());
  }
}

// Names the first non-finite piece of a sample's log p - log q.
[[noreturn]] void report_non_finite(const Model& model, const Dataset& data, const Vector& theta,
                                    const RowMatrix& z, std::span<const int> sites, int sample) {
  const double prior = model.log_prior_theta(theta, nullptr);
  if (!std::isfinite(prior)) {
    throw NumericalError("ELBO: log p(theta) not finite in sample " + std::to_string(sample),
                         std::nullopt, sample);
  }
  for (const int n : sites) {
    if (!std::isfinite(model.site_term(theta, z, data, n)) || !z.row(n).allFinite()) {
      throw NumericalError("ELBO: not finite at sample " + std::to_string(sample) + ", site " +
                               std::to_string(n),
                           n, sample);
    }
  }
  throw NumericalError("ELBO: entropy term not finite in sample " + std::to_string(sample),
                       std::nullopt, sample);
}

}  // namespace

ElboEstimate elbo_estimate(const Model& model, const VariationalState& state, const Dataset& data,
                           const NoiseBlock& noise, std::span<const int> minibatch,
                           bool want_grad) {
  check_binding(state, model, data);
  check_noise(model, data, noise);
  const int n_sites = static_cast<int>(data.size());
  const int td = model.theta_dim();
  const int zd = model.z_dim();

  std::vector<int> all_sites;
  std::span<const int> sites = minibatch;
  if (minibatch.empty()) {
    all_sites.resize(static_cast<std::size_t>(n_sites));
    std::iota(all_sites.begin(), all_sites.end(), 0);
    sites = all_sites;
  } else {
    for (const int n : minibatch) {
      if (n < 0 || n >= n_sites) throw std::out_of_range("minibatch site " + std::to_string(n));
    }
  }
  const double scale = static_cast<double>(n_sites) / static_cast<double>(sites.size());

  const DiagGaussian& qt = q_theta_of(state);
  const Vector theta_std = qt.std_dev();
  const SiteFactors f = materialize_factors(state, model, data);
  const RowMatrix site_std = f.log_std.array().exp().matrix();

  Vector theta(td);
  RowMatrix z(n_sites, zd);
  Vector g_theta(td);
  RowMatrix g_z;
  Vector acc_theta_mean = Vector::Zero(td);
  Vector acc_theta_log_std = Vector::Zero(td);
  RowMatrix acc_mean, acc_log_std;
  if (want_grad) {
    g_z.resize(n_sites, zd);
    acc_mean = RowMatrix::Zero(n_sites, zd);
    acc_log_std = RowMatrix::Zero(n_sites, zd);
  }

  // Entropy pieces that do not depend on the noise.
  double theta_log_std_sum = qt.log_std.sum();
  double site_log_std_sum = 0.0;
  for (const int n : sites) site_log_std_sum += f.log_std.row(n).sum();

  double total = 0.0;
  for (int s = 0; s < noise.samples; ++s) {
    const double* eps = noise.draws.row(s).data();
    const double* eps_z = eps + td;
    for (int d = 0; d < td; ++d) theta[d] = qt.mean[d] + theta_std[d] * eps[d];
    for (int n = 0; n < n_sites; ++n) {
      for (int d = 0; d < zd; ++d) {
        z(n, d) = f.mean(n, d) + site_std(n, d) * eps_z[n * zd + d];
      }
    }
    if (want_grad) {
      g_theta.setZero();
      g_z.setZero();
    }
    double value = model.log_prior_theta(theta, want_grad ? &g_theta : nullptr);
    value += model.accumulate_sites(theta, z, data, sites, scale, want_grad ? &g_theta : nullptr,
                                    want_grad ? &g_z : nullptr);

    // -log q at the sample, written in terms of the noise.
    double sq_theta = 0.0;
    for (int d = 0; d < td; ++d) sq_theta += eps[d] * eps[d];
    double sq_sites = 0.0;
    for (const int n : sites) {
      for (int d = 0; d < zd; ++d) sq_sites += eps_z[n * zd + d] * eps_z[n * zd + d];
    }
    const double neg_log_q_theta = td * kHalfLog2Pi + theta_log_std_sum + 0.5 * sq_theta;
    const double neg_log_q_sites =
        scale * (static_cast<double>(sites.size()) * zd * kHalfLog2Pi + site_log_std_sum +
                 0.5 * sq_sites);
    value += neg_log_q_theta + neg_log_q_sites;
    if (!std::isfinite(value)) report_non_finite(model, data, theta, z, sites, s);
    total += value;

    if (want_grad) {
      for (int d = 0; d < td; ++d) {
        acc_theta_mean[d] += g_theta[d];
        acc_theta_log_std[d] += g_theta[d] * eps[d] * theta_std[d];
      }
      for (int n = 0; n < n_sites; ++n) {
        for (int d = 0; d < zd; ++d) {
          const double g = g_z(n, d);
          acc_mean(n, d) += g;
          acc_log_std(n, d) += g * eps_z[n * zd + d] * site_std(n, d);
        }
      }
    }
  }

  ElboEstimate out;
  out.samples = noise.samples;
  const double inv_s = 1.0 / noise.samples;
  out.value = total * inv_s;
  if (want_grad) {
    acc_theta_mean *= inv_s;
    acc_theta_log_std = acc_theta_log_std * inv_s + Vector::Ones(td);
    acc_mean *= inv_s;
    acc_log_std *= inv_s;
    // d(-log q_n)/d log_std = 1 per batch site, scaled.
    for (const int n : sites) acc_log_std.row(n).array() += scale;
    out.grad = backprop_site_gradient(state, model, data, acc_theta_mean, acc_theta_log_std,
                                      acc_mean, acc_log_std);
    if (!out.grad.allFinite()) throw NumericalError("ELBO gradient is not finite");
  }
  return out;
}

double finite_diff_check(const Model& model, const VariationalState& state, const Dataset& data,
                         const NoiseBlock& noise, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  const Vector analytic = elbo_estimate(model, state, data, noise).grad;
  const Vector base = param_vector(state);
  VariationalState probe = state;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p[i] = base[i] + step;
    load_params(probe, p);
    const double up = elbo_estimate(model, probe, data, noise, {}, false).value;
    p[i] = base[i] - step;
    load_params(probe, p);
    const double down = elbo_estimate(model, probe, data, noise, {}, false).value;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace avilab
