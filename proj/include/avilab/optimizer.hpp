#pragma once

#include "avilab/elbo.hpp"
#include "avilab/model.hpp"
#include "avilab/variational.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace avilab {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_steps = 20000;
  /// Monte-Carlo draws per step.
  int samples = 100;
  int convergence_window = 200;
  double convergence_rel_tol = 1e-3;
  /// Stop at the first step the convergence rule fires.
  bool stop_on_convergence = false;
  /// 0 means full batch.
  int batch_size = 0;
  std::uint64_t seed = 0;
  /// Draws of the fixed evaluation block used for the final ELBO.
  int eval_samples = 1000;
  std::uint64_t eval_seed = 20240101;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

struct AdamMoments {
  Vector m;
  Vector v;
};

/// One ascent step: params += lr * m_hat / (sqrt(v_hat) + eps). t counts from 1.
/// Throws NumericalError on a non-finite gradient.
void adam_step(Vector& params, const Vector& grad, AdamMoments& moments, int t,
               const OptimizerConfig& cfg);

struct StepRecord {
  int step = 0;
  double wall_time_ms = 0.0;
  double elbo = 0.0;
};

struct RunRecord {
  std::string model;
  std::string algo;
  /// Family capacity: "fvi", "constant" or the architecture description.
  std::string capacity;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  VariationalState final_state;
  std::optional<int> converged_at;
  /// ELBO of final_state under the fixed evaluation noise block.
  double final_elbo = 0.0;
  /// Set when the run aborted on a numerical failure.
  std::string error;
};

/// Uniform subset of sites without replacement, sorted.
std::vector<int> draw_minibatch(int n_sites, int batch_size, Engine& engine);

/// Median-window rule: the median of the last `window` values improves on
/// the median of the `window` before by less than rel_tol * |last median|.
/// Needs 2 * window values.
bool window_converged(std::span<const double> elbos, int window, double rel_tol);

/// ELBO of a state under the fixed evaluation block of cfg (full batch).
double evaluate_elbo(const Model& model, const VariationalState& state, const Dataset& data,
                     const OptimizerConfig& cfg);

/// Adam on the full parameter vector with a fresh noise block per step.
/// Numerical failures end the run early with `error` set.
RunRecord fit(const Model& model, const VariationalState& initial, const Dataset& data,
              const OptimizerConfig& cfg);

enum class GapVerdict { open, closed, skipped };
std::string verdict_name(GapVerdict verdict);

struct Refinement {
  RunRecord record;
  GapVerdict verdict = GapVerdict::skipped;
  /// Final ELBO gain of the factorized continuation over the input state.
  double improvement = 0.0;
};

/// Continues an amortized or constant run as F-VI for extra_steps. The gap
/// is "open" when the median ELBO over the last convergence window of the
/// continuation beats the median of the input run's last window by more
/// than convergence_rel_tol relative.
Refinement refine_with_fvi(const Model& model, const Dataset& data, const RunRecord& record,
                           int extra_steps, const OptimizerConfig& cfg);

}  // namespace avilab
