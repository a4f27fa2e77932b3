#pragma once

#include "avilab/dataset.hpp"
#include "avilab/inference_fn.hpp"
#include "avilab/optimizer.hpp"
#include "avilab/variational.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace avilab {

/// One experiment: a model, a dataset recipe, one variational family and a
/// list of seeds. Serialized as flat "key = value" lines.
struct ExperimentConfig {
  std::string model = "linear";
  /// Overrides of the model's hyperparameters ("hyper.<name>" keys).
  Hyperparams hyperparams;
  int n = 1000;
  /// Seed of the simulated dataset; ignored when data_path is set.
  std::uint64_t data_seed = 0;
  std::filesystem::path data_path;

  Algorithm algorithm = Algorithm::fvi;
  /// "poly" or "mlp"; used by avi only.
  std::string kind = "poly";
  int degree = 1;
  int width = 16;
  int depth = 2;
  Activation activation = Activation::relu;
  int window = 1;

  OptimizerConfig optimizer;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = ".";

  /// Throws std::invalid_argument when inconsistent.
  void validate() const;
  FamilySpec family() const;
};

/// Applies one key; unknown keys and malformed values throw std::invalid_argument.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// '#' starts a comment; blank lines are ignored.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig read_config(const std::filesystem::path& path);

/// Every key, in a fixed order; parse_config(emit_config(c)) reproduces c.
std::string emit_config(const ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace avilab
