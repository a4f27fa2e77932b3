#include "avilab/optimizer.hpp"

#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace avilab {

void OptimizerConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("optimizer config: ") + what);
  };
  require(learning_rate > 0.0, "learning rate must be positive");
  require(beta1 > 0.0 && beta1 < 1.0, "beta1 must lie in (0, 1)");
  require(beta2 > 0.0 && beta2 < 1.0, "beta2 must lie in (0, 1)");
  require(epsilon > 0.0, "epsilon must be positive");
  require(max_steps >= 0, "max_steps must be >= 0");
  require(samples >= 1, "samples must be >= 1");
  require(convergence_window >= 1, "convergence window must be >= 1");
  require(convergence_rel_tol >= 0.0, "convergence tolerance must be >= 0");
  require(batch_size >= 0, "batch size must be >= 0");
  require(eval_samples >= 1, "eval_samples must be >= 1");
}

void adam_step(Vector& params, const Vector& grad, AdamMoments& moments, int t,
               const OptimizerConfig& cfg) {
  if (grad.size() != params.size()) throw DimensionError("adam: gradient length differs from params");
  if (t < 1) throw std::invalid_argument("adam: step counter starts at 1");
  if (moments.m.size() != params.size()) moments.m = Vector::Zero(params.size());
  if (moments.v.size() != params.size()) moments.v = Vector::Zero(params.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam: gradient coordinate " + std::to_string(i) + " is not finite",
                           std::nullopt, std::nullopt, t);
    }
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] += cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

namespace {

double median(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double tail_median(const std::vector<StepRecord>& steps, std::size_t count) {
  count = std::min(count, steps.size());
  std::vector<double> v;
  v.reserve(count);
  for (std::size_t i = steps.size() - count; i < steps.size(); ++i) v.push_back(steps[i].elbo);
  return median(std::move(v));
}

}  // namespace

std::vector<int> draw_minibatch(int n_sites, int batch_size, Engine& engine) {
  if (batch_size < 1 || batch_size > n_sites) throw std::invalid_argument("bad minibatch size");
  std::vector<int> sites(static_cast<std::size_t>(n_sites));
  std::iota(sites.begin(), sites.end(), 0);
  // Partial Fisher-Yates: the first batch_size slots become the sample.
  for (int i = 0; i < batch_size; ++i) {
    boost::random::uniform_int_distribution<int> pick(i, n_sites - 1);
    std::swap(sites[static_cast<std::size_t>(i)], sites[static_cast<std::size_t>(pick(engine))]);
  }
  sites.resize(static_cast<std::size_t>(batch_size));
  std::sort(sites.begin(), sites.end());
  return sites;
}

bool window_converged(std::span<const double> elbos, int window, double rel_tol) {
  const auto w = static_cast<std::size_t>(window);
  if (window < 1 || elbos.size() < 2 * w) return false;
  const auto end = elbos.end();
  const double last = median({end - static_cast<std::ptrdiff_t>(w), end});
  const double prev = median({end - static_cast<std::ptrdiff_t>(2 * w), end - static_cast<std::ptrdiff_t>(w)});
  return last - prev < rel_tol * std::abs(last);
}

double evaluate_elbo(const Model& model, const VariationalState& state, const Dataset& data,
                     const OptimizerConfig& cfg) {
  const NoiseBlock block =
      NoiseBlock::generate(cfg.eval_samples, model, data, cfg.eval_seed, Stream::evaluation);
  return elbo_estimate(model, state, data, block, {}, false).value;
}

RunRecord fit(const Model& model, const VariationalState& initial, const Dataset& data,
              const OptimizerConfig& cfg) {
  cfg.validate();
  check_binding(initial, model, data);
  RunRecord record;
  record.model = model.name();
  record.algo = algorithm_name(algorithm_of(initial));
  record.capacity = capacity_label(initial);
  record.seed = cfg.seed;
  record.final_state = initial;

  const int n_sites = static_cast<int>(data.size());
  const bool batched = cfg.batch_size > 0 && cfg.batch_size < n_sites;
  std::vector<int> batch;

  VariationalState state = initial;
  Vector params = param_vector(state);
  AdamMoments moments;
  std::vector<double> elbos;
  record.steps.reserve(static_cast<std::size_t>(cfg.max_steps));
  double elapsed_ms = 0.0;

  for (int step = 1; step <= cfg.max_steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const NoiseBlock noise = NoiseBlock::generate(cfg.samples, model, data, cfg.seed,
                                                    Stream::noise, static_cast<std::uint64_t>(step));
      if (batched) {
        Engine engine = make_engine(cfg.seed, Stream::minibatch, static_cast<std::uint64_t>(step));
        batch = draw_minibatch(n_sites, cfg.batch_size, engine);
      }
      const ElboEstimate est = elbo_estimate(model, state, data, noise, batch);
      adam_step(params, est.grad, moments, step, cfg);
      load_params(state, params);
      elapsed_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      record.steps.push_back({step, elapsed_ms, est.value});
      elbos.push_back(est.value);
    } catch (const NumericalError& e) {
      record.error = std::string(e.what()) + " (step " + std::to_string(step) + ")";
      record.final_state = state;
      record.final_elbo = std::numeric_limits<double>::quiet_NaN();
      return record;
    }
    if (!record.converged_at &&
        window_converged(elbos, cfg.convergence_window, cfg.convergence_rel_tol)) {
      record.converged_at = step;
      if (cfg.stop_on_convergence) break;
    }
  }
  record.final_state = state;
  try {
    record.final_elbo = evaluate_elbo(model, state, data, cfg);
  } catch (const NumericalError& e) {
    record.error = std::string(e.what()) + " (final evaluation)";
    record.final_elbo = std::numeric_limits<double>::quiet_NaN();
  }
  return record;
}

std::string verdict_name(GapVerdict verdict) {
  switch (verdict) {
    case GapVerdict::open: return "open";
    case GapVerdict::closed: return "closed within detection power";
    case GapVerdict::skipped: return "skipped";
  }
  return "unknown";
}

Refinement refine_with_fvi(const Model& model, const Dataset& data, const RunRecord& record,
                           int extra_steps, const OptimizerConfig& cfg) {
  const Algorithm algo = algorithm_of(record.final_state);
  if (algo == Algorithm::fvi) {
    throw std::invalid_argument("refine_with_fvi needs an amortized or constant-factor run");
  }
  Refinement out;
  if (extra_steps <= 0) {
    out.record = record;
    return out;
  }
  OptimizerConfig refine_cfg = cfg;
  refine_cfg.max_steps = extra_steps;
  refine_cfg.stop_on_convergence = false;
  refine_cfg.seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;
  const VariationalState start = embed_to_factorized(record.final_state, model, data);
  out.record = fit(model, start, data, refine_cfg);
  if (!out.record.error.empty() || out.record.steps.empty()) {
    out.verdict = GapVerdict::skipped;
    return out;
  }
  const auto window = static_cast<std::size_t>(cfg.convergence_window);
  double baseline;
  if (!record.steps.empty()) {
    baseline = tail_median(record.steps, window);
  } else {
    baseline = evaluate_elbo(model, record.final_state, data, cfg);
  }
  const double refined = tail_median(out.record.steps, window);
  out.improvement = out.record.final_elbo - evaluate_elbo(model, record.final_state, data, cfg);
  out.verdict = refined - baseline > cfg.convergence_rel_tol * std::abs(refined) ? GapVerdict::open
                                                                                 : GapVerdict::closed;
  return out;
}

}  // namespace avilab
