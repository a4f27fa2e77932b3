#pragma once

#include "avilab/dataset.hpp"
#include "avilab/gaussian.hpp"
#include "avilab/models.hpp"
#include "avilab/variational.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace avilab {

/// Optimal factorized Gaussian for a scalar-latent model.
struct FviOptimum {
  std::optional<DiagGaussian> q_theta_star;
  Vector site_means;
  Vector site_vars;
};

/// As a FactorizedState (log_std = log(var) / 2). theta_dim is taken from
/// q_theta_star, or 0 when absent.
FactorizedState to_state(const FviOptimum& opt);

// ----------------------------------------------------------------- linear

/// Site means tau/(sigma^2+tau^2) (x_n - xbar), site variances
/// sigma^2/(sigma^2+tau^2), q(theta) = N(xbar, sigma^2/N). Needs N >= 2.
FviOptimum linear_fvi_optimum(const Dataset& data, double tau, double sigma);

/// Exact posterior over (theta, z_1..z_N), theta first, built from the
/// quadratic form of log p(theta, z | x). N <= kDenseLimit - 1.
DenseGaussian linear_exact_posterior(const Dataset& data, double tau, double sigma);

/// The z-marginal posterior precision is beta*I + alpha*11^T.
struct RankOnePrecision {
  double beta;
  double alpha;
};
RankOnePrecision linear_z_marginal_precision(int n, double tau, double sigma);

/// Max distance between the candidate's factors (mean, log_std) and their
/// closed-form coordinate-ascent updates given the other factors.
/// Linear model only.
double cavi_residual(const Model& model, const FactorizedState& candidate, const Dataset& data);

// -------------------------------------------------------------------- hmm

/// Precision of log p(z | x) for the HMM with theta held fixed.
SymTridiag hmm_posterior_precision(int n, bool anchored);

/// Requires theta held fixed and N >= 2.
DenseGaussian hmm_exact_posterior(const HmmModel& model, const Dataset& data);
FviOptimum hmm_fvi_optimum(const HmmModel& model, const Dataset& data);

// -------------------------------------------------------------------- saw

/// exp E_q(theta)[log p(x_n | z_n, theta)] times N(z_n; x_{n-1}, 1), normalized.
/// Throws EdgeSiteError for an edge site of the model's window.
DiagGaussian saw_cavi_factor(const SawModel& model, const Dataset& data,
                             const DiagGaussian& q_theta, int n);

/// Closed-form fixed point of the saw model's coordinate ascent.
FviOptimum saw_fvi_optimum(const SawModel& model, const Dataset& data);

// ----------------------------------------------------------- amortization

struct ProbeResult {
  bool well_posed = true;
  /// Two non-edge sites with matching inputs and different targets.
  std::optional<std::pair<int, int>> witness;
};

/// Scans non-edge site pairs for equal windows (within input_tol) whose
/// optimal (mean, var) differ by more than target_tol.
ProbeResult well_posedness_probe(const FviOptimum& opt, const Dataset& data, int window,
                                 double input_tol = 1e-6, double target_tol = 1e-4);

/// Sites grouped by identical window inputs; returns class ids per site
/// (edge sites get singleton classes).
std::vector<int> input_classes(const Dataset& data, int window);

/**
 * Exact ELBO shortfall of the best window-limited amortized Gaussian
 * relative to the best factorized Gaussian, for a Gaussian posterior with
 * precision `precision` and linear term `b` over scalar latents. Sites in
 * the same class must share a factor; any inference function is allowed.
 */
double amortization_gap_bound(const Matrix& precision, const Vector& b,
                              const std::vector<int>& class_of);

}  // namespace avilab
