#include "avilab/dataset.hpp"

#include "avilab/text.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace avilab {

Dataset::Dataset(RowMatrix x_in) : x(std::move(x_in)) {}

void Dataset::validate() const {
  if (x.rows() < 1) throw std::invalid_argument("dataset must contain at least one site");
  if (x.cols() < 1) throw std::invalid_argument("dataset must have at least one column");
  if (!x.allFinite()) throw std::invalid_argument("dataset contains non-finite entries");
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "# model = " << (data.model.empty() ? "external" : data.model) << "\n";
  if (data.seed) out << "# seed = " << *data.seed << "\n";
  for (const auto& [key, value] : data.hyperparams) {
    out << "# hyper." << key << " = " << text::format_double(value) << "\n";
  }
  for (const auto& note : data.notes) out << "# note = " << note << "\n";
  for (Eigen::Index d = 0; d < data.x_dim(); ++d) {
    out << (d ? "," : "") << "x_" << (d + 1);
  }
  out << "\n";
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    for (Eigen::Index d = 0; d < data.x_dim(); ++d) {
      out << (d ? "," : "") << text::format_double(data.x(n, d));
    }
    out << "\n";
  }
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  write_dataset_csv(out, data);
  if (!out) throw std::runtime_error("error while writing " + path.string());
}

Dataset read_dataset_csv(std::istream& in) {
  Dataset data;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '#') {
      const auto body = text::trim(trimmed.substr(1));
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      const std::string key(text::trim(body.substr(0, eq)));
      const std::string value(text::trim(body.substr(eq + 1)));
      if (key == "model") {
        data.model = value == "external" ? "" : value;
      } else if (key == "seed") {
        data.seed = static_cast<std::uint64_t>(text::parse_int(value));
      } else if (key.rfind("hyper.", 0) == 0) {
        data.hyperparams[key.substr(6)] = text::parse_double(value);
      } else if (key == "note") {
        data.notes.push_back(value);
      }
      continue;
    }
    const auto fields = text::split(trimmed, ',');
    if (!header_seen) {
      header_seen = true;
      columns = fields.size();
      continue;
    }
    if (fields.size() != columns) {
      throw std::invalid_argument("dataset row " + std::to_string(rows.size() + 1) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(columns));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(text::parse_double(f));
    rows.push_back(std::move(row));
  }
  data.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t d = 0; d < columns; ++d) {
      data.x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)) = rows[n][d];
    }
  }
  data.validate();
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  return read_dataset_csv(in);
}

}  // namespace avilab
