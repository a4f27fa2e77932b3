#include "avilab/inference_fn.hpp"

#include "avilab/text.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace avilab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double activate(double a, Activation act) {
  if (a > 0.0) return a;
  return act == Activation::relu ? 0.0 : kLeakySlope * a;
}

double activate_slope(double a, Activation act) {
  if (a > 0.0) return 1.0;
  return act == Activation::relu ? 0.0 : kLeakySlope;
}

int count_params(const Architecture& arch, int input_dim, int z_dim) {
  return std::visit(
      Overloaded{
          [&](const PolynomialArch& p) { return z_dim * (1 + input_dim * p.degree) + z_dim; },
          [&](const MlpArch& m) {
            int total = 0;
            int in = input_dim;
            for (const int width : m.hidden) {
              total += width * in + width;
              in = width;
            }
            return total + 2 * z_dim * in + 2 * z_dim;
          }},
      arch);
}

}  // namespace

std::string describe(const Architecture& arch) {
  return std::visit(Overloaded{[](const PolynomialArch& p) {
                                 return "poly(d=" + std::to_string(p.degree) + ")";
                               },
                               [](const MlpArch& m) {
                                 std::string out = "mlp(";
                                 for (std::size_t i = 0; i < m.hidden.size(); ++i) {
                                   out += (i ? "x" : "") + std::to_string(m.hidden[i]);
                                 }
                                 out += m.activation == Activation::relu ? ",relu)" : ",leaky_relu)";
                                 return out;
                               }},
                    arch);
}

Architecture parse_architecture(const std::string& text_in) {
  const auto t = std::string(text::trim(text_in));
  const auto open = t.find('(');
  if (open == std::string::npos || t.back() != ')') {
    throw std::invalid_argument("cannot parse architecture '" + t + "'");
  }
  const std::string kind = t.substr(0, open);
  const std::string body = t.substr(open + 1, t.size() - open - 2);
  if (kind == "poly") {
    if (body.rfind("d=", 0) != 0) throw std::invalid_argument("bad polynomial spec '" + t + "'");
    const auto degree = text::parse_int(body.substr(2));
    if (degree < 0) throw std::invalid_argument("polynomial degree must be >= 0");
    return PolynomialArch{static_cast<int>(degree)};
  }
  if (kind == "mlp") {
    const auto parts = text::split(body, ',');
    if (parts.size() != 2) throw std::invalid_argument("bad mlp spec '" + t + "'");
    MlpArch arch;
    for (const auto& w : text::split(parts[0], 'x')) {
      const auto width = text::parse_int(w);
      if (width < 1) throw std::invalid_argument("mlp widths must be positive");
      arch.hidden.push_back(static_cast<int>(width));
    }
    if (parts[1] == "relu") {
      arch.activation = Activation::relu;
    } else if (parts[1] == "leaky_relu") {
      arch.activation = Activation::leaky_relu;
    } else {
      throw std::invalid_argument("unknown activation '" + parts[1] + "'");
    }
    return arch;
  }
  throw std::invalid_argument("unknown inference function kind '" + kind + "'");
}

InferenceFn::InferenceFn(Architecture arch, int input_dim, int z_dim)
    : arch_(std::move(arch)), input_dim_(input_dim), z_dim_(z_dim) {
  if (input_dim < 1 || z_dim < 1) throw std::invalid_argument("inference function dims must be positive");
  if (const auto* p = std::get_if<PolynomialArch>(&arch_); p && p->degree < 0) {
    throw std::invalid_argument("polynomial degree must be >= 0");
  }
  params_ = Vector::Zero(count_params(arch_, input_dim_, z_dim_));
}

std::vector<int> InferenceFn::layer_sizes() const {
  const auto& m = std::get<MlpArch>(arch_);
  std::vector<int> sizes{input_dim_};
  sizes.insert(sizes.end(), m.hidden.begin(), m.hidden.end());
  sizes.push_back(output_dim());
  return sizes;
}

void InferenceFn::forward(const double* input, double* output) const {
  const double* p = params_.data();
  if (const auto* poly = std::get_if<PolynomialArch>(&arch_)) {
    for (int j = 0; j < z_dim_; ++j) {
      double mean = *p++;
      for (int i = 0; i < input_dim_; ++i) {
        double power = 1.0;
        for (int k = 1; k <= poly->degree; ++k) {
          power *= input[i];
          mean += *p++ * power;
        }
      }
      output[j] = mean;
    }
    for (int j = 0; j < z_dim_; ++j) output[z_dim_ + j] = *p++;
    return;
  }
  const auto& mlp = std::get<MlpArch>(arch_);
  const auto sizes = layer_sizes();
  thread_local std::vector<double> current, next;
  current.assign(input, input + input_dim_);
  for (std::size_t layer = 0; layer + 1 < sizes.size(); ++layer) {
    const int in = sizes[layer];
    const int out = sizes[layer + 1];
    const double* w = p;
    const double* b = p + out * in;
    next.resize(out);
    const bool last = layer + 2 == sizes.size();
    for (int o = 0; o < out; ++o) {
      double a = b[o];
      for (int i = 0; i < in; ++i) a += w[o * in + i] * current[i];
      next[o] = last ? a : activate(a, mlp.activation);
    }
    p = b + out;
    current.swap(next);
  }
  std::copy(current.begin(), current.end(), output);
}

Vector InferenceFn::forward(const Vector& input) const {
  if (input.size() != input_dim_) {
    throw DimensionError("inference function expects " + std::to_string(input_dim_) +
                         " inputs, got " + std::to_string(input.size()));
  }
  Vector out(output_dim());
  forward(input.data(), out.data());
  return out;
}

void InferenceFn::backward(const double* input, const double* d_output, double* grad) const {
  if (const auto* poly = std::get_if<PolynomialArch>(&arch_)) {
    double* g = grad;
    for (int j = 0; j < z_dim_; ++j) {
      *g++ += d_output[j];
      for (int i = 0; i < input_dim_; ++i) {
        double power = 1.0;
        for (int k = 1; k <= poly->degree; ++k) {
          power *= input[i];
          *g++ += d_output[j] * power;
        }
      }
    }
    for (int j = 0; j < z_dim_; ++j) *g++ += d_output[z_dim_ + j];
    return;
  }
  const auto& mlp = std::get<MlpArch>(arch_);
  const auto sizes = layer_sizes();
  const std::size_t layers = sizes.size() - 1;
  // Forward pass keeping pre-activations and activations of every layer.
  thread_local std::vector<std::vector<double>> acts, pres;
  acts.resize(layers + 1);
  pres.resize(layers + 1);
  acts[0].assign(input, input + input_dim_);
  std::vector<std::size_t> offsets(layers);
  std::size_t offset = 0;
  for (std::size_t layer = 0; layer < layers; ++layer) {
    offsets[layer] = offset;
    const int in = sizes[layer];
    const int out = sizes[layer + 1];
    const double* w = params_.data() + offset;
    const double* b = w + out * in;
    auto& pre = pres[layer + 1];
    auto& act = acts[layer + 1];
    pre.resize(out);
    act.resize(out);
    const bool last = layer + 1 == layers;
    for (int o = 0; o < out; ++o) {
      double a = b[o];
      for (int i = 0; i < in; ++i) a += w[o * in + i] * acts[layer][i];
      pre[o] = a;
      act[o] = last ? a : activate(a, mlp.activation);
    }
    offset += static_cast<std::size_t>(out * in + out);
  }
  thread_local std::vector<double> delta, delta_prev;
  delta.assign(d_output, d_output + output_dim());
  for (std::size_t layer = layers; layer-- > 0;) {
    const int in = sizes[layer];
    const int out = sizes[layer + 1];
    const double* w = params_.data() + offsets[layer];
    double* gw = grad + offsets[layer];
    double* gb = gw + out * in;
    for (int o = 0; o < out; ++o) {
      gb[o] += delta[o];
      for (int i = 0; i < in; ++i) gw[o * in + i] += delta[o] * acts[layer][i];
    }
    if (layer == 0) break;
    delta_prev.assign(in, 0.0);
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) delta_prev[i] += w[o * in + i] * delta[o];
    }
    for (int i = 0; i < in; ++i) delta_prev[i] *= activate_slope(pres[layer][i], mlp.activation);
    delta.swap(delta_prev);
  }
}

void InferenceFn::initialize(Engine& engine) {
  params_.setZero();
  if (std::holds_alternative<PolynomialArch>(arch_)) return;
  const auto sizes = layer_sizes();
  std::size_t offset = 0;
  for (std::size_t layer = 0; layer + 1 < sizes.size(); ++layer) {
    const int in = sizes[layer];
    const int out = sizes[layer + 1];
    const double half_width = std::sqrt(6.0 / static_cast<double>(in + out));
    boost::random::uniform_real_distribution<double> uniform(-half_width, half_width);
    for (int k = 0; k < out * in; ++k) params_[static_cast<Eigen::Index>(offset) + k] = uniform(engine);
    offset += static_cast<std::size_t>(out * in + out);
  }
}

Vector mlp_forward(const InferenceFn& fn, const Vector& input) {
  if (!std::holds_alternative<MlpArch>(fn.architecture())) {
    throw std::invalid_argument("mlp_forward called on a non-MLP inference function");
  }
  return fn.forward(input);
}

}  // namespace avilab
