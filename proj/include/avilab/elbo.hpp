#pragma once

#include "avilab/model.hpp"
#include "avilab/variational.hpp"

#include <cstdint>
#include <span>

namespace avilab {

/// Standard-normal draws for S samples of (theta, z_{1:N}). Row s holds
/// theta's noise followed by the site noise, site-major.
struct NoiseBlock {
  int samples = 0;
  int theta_dim = 0;
  int sites = 0;
  int z_dim = 0;
  std::uint64_t seed = 0;
  RowMatrix draws;

  /// Deterministic in (seed, stream, index).
  static NoiseBlock generate(int samples, int theta_dim, int sites, int z_dim, std::uint64_t seed,
                             Stream stream = Stream::noise, std::uint64_t index = 0);
  static NoiseBlock generate(int samples, const Model& model, const Dataset& data,
                             std::uint64_t seed, Stream stream = Stream::noise,
                             std::uint64_t index = 0);
};

struct ElboEstimate {
  double value = 0.0;
  /// Same ordering as param_vector().
  Vector grad;
  int samples = 0;
};

/**
 * Monte-Carlo ELBO (1/S) sum_s [log p(theta_s, z_s, x) - log q(theta_s, z_s)]
 * and its exact gradient for the given noise.
 *
 * With a minibatch, the site terms of the joint and of the entropy are
 * scaled by N/|batch|; theta's prior and entropy are not. Every site's
 * latent is still drawn (neighbouring sites may read it). Samples are
 * summed sequentially in index order.
 */
ElboEstimate elbo_estimate(const Model& model, const VariationalState& state, const Dataset& data,
                           const NoiseBlock& noise, std::span<const int> minibatch = {},
                           bool want_grad = true);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const Model& model, const VariationalState& state, const Dataset& data,
                         const NoiseBlock& noise, double step);

}  // namespace avilab
