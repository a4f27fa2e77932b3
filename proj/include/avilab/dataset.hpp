#pragma once

#include "avilab/gaussian.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace avilab {

using Hyperparams = std::map<std::string, double>;

/// Observations x_{1:N}, one row per site.
struct Dataset {
  RowMatrix x;
  /// Name of the simulating model, or empty for external data.
  std::string model;
  std::optional<std::uint64_t> seed;
  Hyperparams hyperparams;
  /// Free-form provenance notes written to the CSV header (e.g. "x0 = 0").
  std::vector<std::string> notes;

  Dataset() = default;
  explicit Dataset(RowMatrix x);

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index x_dim() const { return x.cols(); }
  bool external() const { return !seed.has_value(); }

  /// Throws unless N >= 1 and every entry is finite.
  void validate() const;
};

/// CSV with '#'-prefixed provenance header and columns x_1..x_D.
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace avilab
