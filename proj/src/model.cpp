#include "avilab/model.hpp"

#include <cmath>
#include <sstream>

namespace avilab {

Model::Model(int window, Hyperparams hyperparams)
    : window_(window), hyperparams_(std::move(hyperparams)) {
  if (window_ < 1) throw std::invalid_argument("amortization window must be >= 1");
}

std::vector<int> Model::edge_sites() const {
  std::vector<int> out;
  for (int n = 0; n + 1 < window_; ++n) out.push_back(n);
  return out;
}

void Model::check_data(const Dataset& data) const {
  data.validate();
  if (data.x_dim() != x_dim()) {
    std::ostringstream msg;
    msg << name() << ": dataset has " << data.x_dim() << " columns, model expects " << x_dim();
    throw DimensionError(msg.str());
  }
}

void Model::check_shapes(const Vector& theta, const RowMatrix& z, const Dataset& data) const {
  check_data(data);
  if (theta.size() != theta_dim()) {
    std::ostringstream msg;
    msg << name() << ": theta has length " << theta.size() << ", expected " << theta_dim();
    throw DimensionError(msg.str());
  }
  if (z.rows() != data.size() || z.cols() != z_dim()) {
    std::ostringstream msg;
    msg << name() << ": z is " << z.rows() << "x" << z.cols() << ", expected " << data.size()
        << "x" << z_dim();
    throw DimensionError(msg.str());
  }
}

double Model::site_term(const Vector& theta, const RowMatrix& z, const Dataset& data,
                        int n) const {
  const int site[1] = {n};
  return accumulate_sites(theta, z, data, site, 1.0, nullptr, nullptr);
}

double Model::log_joint(const Vector& theta, const RowMatrix& z, const Dataset& data) const {
  check_shapes(theta, z, data);
  double total = log_prior_theta(theta, nullptr);
  if (!std::isfinite(total)) throw NumericalError(name() + ": log p(theta) is not finite");
  for (int n = 0; n < data.size(); ++n) {
    const double term = site_term(theta, z, data, n);
    if (!std::isfinite(term)) {
      throw NumericalError(name() + ": log joint not finite at site " + std::to_string(n), n);
    }
    total += term;
  }
  return total;
}

Vector Model::window_inputs(const Dataset& data, int n) const {
  if (n < 0 || n >= data.size()) {
    throw std::out_of_range("site " + std::to_string(n) + " outside dataset of size " +
                            std::to_string(data.size()));
  }
  if (is_edge_site(n)) {
    throw EdgeSiteError("edge site " + std::to_string(n) + " has no full input window");
  }
  const int dx = x_dim();
  Vector out(window_ * dx);
  for (int k = 0; k < window_; ++k) {
    const int row = n - window_ + 1 + k;
    for (int d = 0; d < dx; ++d) out[k * dx + d] = data.x(row, d);
  }
  return out;
}

Dataset Model::make_dataset(RowMatrix x, std::uint64_t seed) const {
  Dataset data(std::move(x));
  data.model = name();
  data.seed = seed;
  data.hyperparams = hyperparams_;
  return data;
}

}  // namespace avilab
