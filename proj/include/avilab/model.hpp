#pragma once

#include "avilab/dataset.hpp"
#include "avilab/gaussian.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avilab {

/// A non-finite quantity met during evaluation. Carries whatever location
/// information was available at the point of failure.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::optional<int> site = {},
                 std::optional<int> sample = {}, std::optional<int> step = {})
      : std::runtime_error(what), site(site), sample(sample), step(step) {}

  std::optional<int> site;
  std::optional<int> sample;
  std::optional<int> step;
};

/// Requested an amortization window for a site that lacks one.
class EdgeSiteError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class Model;

/// Output of ancestral sampling. The latents are kept for diagnostics only.
struct Simulation {
  Dataset data;
  Vector theta;
  RowMatrix z;
};

/**
 * A latent-variable model p(theta, z_{1:N}, x_{1:N}).
 *
 * The joint splits into a global term log p(theta) and one term per site.
 * A site term may read neighbouring latents or observations (the HMM and
 * saw models do), but every term is attributed to exactly one site so the
 * minibatch estimator can rescale by N/|batch|.
 *
 * Sites are indexed from 0. The amortization window w makes sites
 * 0..w-2 edge sites: they have no full input window and receive their own
 * variational factor.
 */
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual int theta_dim() const = 0;
  virtual int z_dim() const = 0;
  virtual int x_dim() const = 0;

  int window() const { return window_; }
  std::vector<int> edge_sites() const;
  bool is_edge_site(int n) const { return n < window_ - 1; }
  const Hyperparams& hyperparams() const { return hyperparams_; }

  /// log p(theta). Adds d/dtheta into grad_theta when given.
  virtual double log_prior_theta(const Vector& theta, Vector* grad_theta) const = 0;

  /// scale * sum over `sites` of the site terms of log p(z, x | theta).
  /// Gradients (also scaled) are added into grad_theta / grad_z when given;
  /// grad_z has the shape of z.
  virtual double accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                                  std::span<const int> sites, double scale, Vector* grad_theta,
                                  RowMatrix* grad_z) const = 0;

  /// Exact log p(theta, z, x). Throws NumericalError naming the first
  /// site whose term is not finite.
  double log_joint(const Vector& theta, const RowMatrix& z, const Dataset& data) const;

  /// Unscaled site-n term of the joint.
  double site_term(const Vector& theta, const RowMatrix& z, const Dataset& data, int n) const;

  /// Ancestral sampling, deterministic in seed.
  virtual Simulation simulate(int n, std::uint64_t seed) const = 0;

  /// (x_{n-w+1}, ..., x_n) flattened; throws EdgeSiteError for edge sites.
  Vector window_inputs(const Dataset& data, int n) const;
  int input_dim() const { return window_ * x_dim(); }

  void check_shapes(const Vector& theta, const RowMatrix& z, const Dataset& data) const;
  void check_data(const Dataset& data) const;

 protected:
  Model(int window, Hyperparams hyperparams);

  Dataset make_dataset(RowMatrix x, std::uint64_t seed) const;

 private:
  int window_;
  Hyperparams hyperparams_;
};

}  // namespace avilab
