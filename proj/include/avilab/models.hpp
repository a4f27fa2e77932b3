#pragma once

#include "avilab/model.hpp"

#include <memory>
#include <string>
#include <vector>

namespace avilab {

/// theta ~ flat, z_n ~ N(0,1), x_n | z_n, theta ~ N(theta + tau z_n, sigma^2).
class LinearModel final : public Model {
 public:
  LinearModel(double tau, double sigma, int window = 1);

  std::string name() const override { return "linear"; }
  int theta_dim() const override { return 1; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }

  double tau() const { return tau_; }
  double sigma() const { return sigma_; }

  double log_prior_theta(const Vector& theta, Vector* grad_theta) const override;
  double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                          std::span<const int> sites, double scale, Vector* grad_theta,
                          RowMatrix* grad_z) const override;
  Simulation simulate(int n, std::uint64_t seed) const override;

 private:
  double tau_;
  double sigma_;
};

/// theta, z_n ~ N(0,1); x_n ~ N(theta + z_n (1 + sin z_n), s(z_n)^2) with
/// s(z) = max(|cos z|, std_floor).
class NonlinearModel final : public Model {
 public:
  explicit NonlinearModel(double std_floor = 1e-3, int window = 1);

  std::string name() const override { return "nonlinear"; }
  int theta_dim() const override { return 1; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }

  double log_prior_theta(const Vector& theta, Vector* grad_theta) const override;
  double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                          std::span<const int> sites, double scale, Vector* grad_theta,
                          RowMatrix* grad_z) const override;
  Simulation simulate(int n, std::uint64_t seed) const override;

 private:
  double std_floor_;
};

/// Saw time series: theta ~ N(0,1), z_n | x_{n-1} ~ N(x_{n-1}, 1),
/// x_n | z_n, theta ~ N(alpha (theta + z_n), 1), with the unobserved
/// x_{-1} fixed to x0 (default 0) so site 0 is the first modelled latent.
class SawModel final : public Model {
 public:
  explicit SawModel(double alpha = 0.5, double x0 = 0.0, int window = 1);

  std::string name() const override { return "saw"; }
  int theta_dim() const override { return 1; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }

  double alpha() const { return alpha_; }
  double x0() const { return x0_; }
  double previous_x(const Dataset& data, int n) const { return n == 0 ? x0_ : data.x(n - 1, 0); }

  double log_prior_theta(const Vector& theta, Vector* grad_theta) const override;
  double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                          std::span<const int> sites, double scale, Vector* grad_theta,
                          RowMatrix* grad_z) const override;
  Simulation simulate(int n, std::uint64_t seed) const override;

 private:
  double alpha_;
  double x0_;
};

/**
 * Gaussian random-walk HMM: z_n | z_{n-1} ~ N(z_{n-1}, 1),
 * x_n | z_n ~ N(z_n + theta, 1).
 *
 * The first latent either carries a flat prior (anchored = false; the term
 * is exactly 0) or is anchored to a fixed z = 0 predecessor, i.e.
 * z_0 ~ N(0, 1). theta is either held at theta_hat (theta_dim() == 0) or
 * learned with a N(0,1) prior. Site n's term holds the transition into z_n
 * and the emission of x_n.
 */
class HmmModel final : public Model {
 public:
  HmmModel(bool anchored = true, bool learn_theta = false, double theta_hat = 0.0, int window = 1);

  std::string name() const override { return "hmm"; }
  int theta_dim() const override { return learn_theta_ ? 1 : 0; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }

  bool anchored() const { return anchored_; }
  bool learns_theta() const { return learn_theta_; }
  double theta_hat() const { return theta_hat_; }

  double log_prior_theta(const Vector& theta, Vector* grad_theta) const override;
  double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                          std::span<const int> sites, double scale, Vector* grad_theta,
                          RowMatrix* grad_z) const override;
  Simulation simulate(int n, std::uint64_t seed) const override;

 private:
  bool anchored_;
  bool learn_theta_;
  double theta_hat_;
};

/**
 * Small Bayesian decoder: z_n ~ N(0, I_2), theta ~ N(0, I), and
 * x_n ~ N(W2 lrelu(W1 z_n + b1) + b2, I_4) with a hidden width of 8.
 * theta packs [W1 (row-major), b1, W2 (row-major), b2].
 */
class DecoderModel final : public Model {
 public:
  DecoderModel(int latent_dim = 2, int hidden = 8, int output_dim = 4, double slope = 0.01,
               int window = 1);

  std::string name() const override { return "decoder"; }
  int theta_dim() const override;
  int z_dim() const override { return latent_dim_; }
  int x_dim() const override { return output_dim_; }

  /// Decoder mean for one latent vector.
  Vector decode(const Vector& theta, const Vector& z) const;

  double log_prior_theta(const Vector& theta, Vector* grad_theta) const override;
  double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                          std::span<const int> sites, double scale, Vector* grad_theta,
                          RowMatrix* grad_z) const override;
  Simulation simulate(int n, std::uint64_t seed) const override;

 private:
  int latent_dim_;
  int hidden_;
  int output_dim_;
  double slope_;
};

std::vector<std::string> model_names();

/// Defaults for every hyperparameter a model accepts.
Hyperparams default_hyperparams(const std::string& name);

/// Builds a model by name; `overrides` must only name known hyperparameters.
std::shared_ptr<const Model> make_model(const std::string& name, const Hyperparams& overrides = {},
                                        int window = 1);

}  // namespace avilab
