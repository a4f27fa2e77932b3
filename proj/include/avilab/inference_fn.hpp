#pragma once

#include "avilab/gaussian.hpp"
#include "avilab/random.hpp"

#include <string>
#include <variant>
#include <vector>

namespace avilab {

enum class Activation { relu, leaky_relu };

inline constexpr double kLeakySlope = 0.01;

/// Mean is an additive polynomial of the inputs (no cross terms); the
/// log standard deviation is a single learned constant per latent dimension.
struct PolynomialArch {
  int degree = 1;
};

/// Fully connected network; every hidden layer is followed by the
/// activation, the output layer is affine.
struct MlpArch {
  std::vector<int> hidden;
  Activation activation = Activation::relu;
};

using Architecture = std::variant<PolynomialArch, MlpArch>;

std::string describe(const Architecture& arch);
/// Inverse of describe(): "poly(d=2)", "mlp(16x16,relu)".
Architecture parse_architecture(const std::string& text);

/**
 * Inference function f_phi mapping a window of observations to the
 * parameters of one site's Gaussian factor.
 *
 * Output layout is [mean (z_dim), log_std (z_dim)]. Parameter layout:
 *  - polynomial: for each latent dim j, the intercept then, for each input
 *    i, the coefficients of x_i^1..x_i^d; followed by the z_dim log_std
 *    constants.
 *  - mlp: for each layer, the weight matrix (row-major, out x in) then the
 *    bias vector.
 */
class InferenceFn {
 public:
  InferenceFn(Architecture arch, int input_dim, int z_dim);

  const Architecture& architecture() const { return arch_; }
  int input_dim() const { return input_dim_; }
  int z_dim() const { return z_dim_; }
  int output_dim() const { return 2 * z_dim_; }
  int param_count() const { return static_cast<int>(params_.size()); }

  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  void forward(const double* input, double* output) const;
  Vector forward(const Vector& input) const;

  /// Adds (d output / d params)^T d_output into grad.
  void backward(const double* input, const double* d_output, double* grad) const;

  /// Polynomial coefficients zero; MLP weights uniform in +-sqrt(6/(fan_in+fan_out)),
  /// biases zero.
  void initialize(Engine& engine);

  bool operator==(const InferenceFn& other) const {
    return describe(arch_) == describe(other.arch_) && input_dim_ == other.input_dim_ &&
           z_dim_ == other.z_dim_ && params_ == other.params_;
  }

 private:
  std::vector<int> layer_sizes() const;

  Architecture arch_;
  int input_dim_;
  int z_dim_;
  Vector params_;
};

/// Forward pass of an MLP-kind inference function.
Vector mlp_forward(const InferenceFn& fn, const Vector& input);

}  // namespace avilab
