#pragma once

#include "avilab/dataset.hpp"
#include "avilab/gaussian.hpp"
#include "avilab/inference_fn.hpp"
#include "avilab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace avilab {

/// q(theta) prod_n q_n(z_n) with a free factor per site.
struct FactorizedState {
  DiagGaussian q_theta;
  std::vector<DiagGaussian> q_z;
};

/// The same factor for every site.
struct ConstantFactorState {
  DiagGaussian q_theta;
  DiagGaussian q_shared;
};

/// Site factors produced by a shared inference function; edge sites keep
/// their own factor.
struct AmortizedState {
  DiagGaussian q_theta;
  InferenceFn inference_fn;
  std::map<int, DiagGaussian> edge_factors;
};

using VariationalState = std::variant<FactorizedState, ConstantFactorState, AmortizedState>;

enum class Algorithm { fvi, constant, avi };

std::string algorithm_name(Algorithm algo);
Algorithm parse_algorithm(const std::string& name);
Algorithm algorithm_of(const VariationalState& state);
const DiagGaussian& q_theta_of(const VariationalState& state);

/// Per-site factor parameters, one row per site.
struct SiteFactors {
  RowMatrix mean;
  RowMatrix log_std;
};

/// Throws std::invalid_argument when the state cannot describe this
/// (model, dataset) pair: wrong site count, dims or edge-factor keys.
void check_binding(const VariationalState& state, const Model& model, const Dataset& data);

DiagGaussian factor_for_site(const AmortizedState& state, const Model& model,
                             const Dataset& data, int n);

/// Every site's factor, laid out contiguously. Callers must have checked
/// the binding.
SiteFactors materialize_factors(const VariationalState& state, const Model& model,
                                const Dataset& data);

/// Explicit factor list defining the same q(theta, z).
FactorizedState embed_to_factorized(const VariationalState& state, const Model& model,
                                    const Dataset& data);

/**
 * Flat parameter vector. Ordering: q_theta mean, q_theta log_std, then
 *  - factorized: for each site, mean then log_std;
 *  - constant: shared mean then log_std;
 *  - amortized: inference-function parameters, then each edge factor in
 *    site order (mean then log_std).
 */
Vector param_vector(const VariationalState& state);
int param_count(const VariationalState& state);
/// Throws DimensionError on a length mismatch.
void load_params(VariationalState& state, const Vector& params);

/// Chain rule from per-site factor gradients to the flat parameter
/// gradient (same ordering as param_vector).
Vector backprop_site_gradient(const VariationalState& state, const Model& model,
                              const Dataset& data, const Vector& g_theta_mean,
                              const Vector& g_theta_log_std, const RowMatrix& g_mean,
                              const RowMatrix& g_log_std);

struct FamilySpec {
  Algorithm algorithm = Algorithm::fvi;
  /// Required for avi.
  std::optional<Architecture> architecture;
};

/// Factor means 0 and log_std 0; inference functions per InferenceFn::initialize.
VariationalState initial_state(const Model& model, const Dataset& data, const FamilySpec& family,
                               std::uint64_t seed);

/// "fvi", "constant", or the architecture description for avi.
std::string capacity_label(const VariationalState& state);

/// Checkpoint: header line naming kind, model, N, window and architecture,
/// then one "index,value" row per parameter.
void write_checkpoint(const std::filesystem::path& path, const VariationalState& state,
                      const Model& model, const Dataset& data);
VariationalState read_checkpoint(const std::filesystem::path& path, const Model& model,
                                 const Dataset& data);

}  // namespace avilab
