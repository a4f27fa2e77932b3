#include "avilab/models.hpp"

#include "avilab/random.hpp"
#include "avilab/text.hpp"

#include <cmath>
#include <stdexcept>

namespace avilab {

namespace {

constexpr double kLog2Pi = 2.0 * kHalfLog2Pi;

double standard_normal_log_density(const Vector& v, Vector* grad) {
  if (grad) *grad -= v;
  return -kHalfLog2Pi * static_cast<double>(v.size()) - 0.5 * v.squaredNorm();
}

}  // namespace

// ---------------------------------------------------------------- linear

LinearModel::LinearModel(double tau, double sigma, int window)
    : Model(window, {{"tau", tau}, {"sigma", sigma}}), tau_(tau), sigma_(sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("linear model: sigma must be positive");
}

double LinearModel::log_prior_theta(const Vector&, Vector*) const { return 0.0; }

double LinearModel::accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                                     std::span<const int> sites, double scale,
                                     Vector* grad_theta, RowMatrix* grad_z) const {
  const double th = theta[0];
  const double inv_var = 1.0 / (sigma_ * sigma_);
  const double log_norm = -kLog2Pi - std::log(sigma_);
  double total = 0.0;
  double g_theta = 0.0;
  for (const int n : sites) {
    const double zn = z(n, 0);
    const double r = data.x(n, 0) - th - tau_ * zn;
    total += log_norm - 0.5 * zn * zn - 0.5 * r * r * inv_var;
    if (grad_z) (*grad_z)(n, 0) += scale * (-zn + tau_ * r * inv_var);
    g_theta += r * inv_var;
  }
  if (grad_theta) (*grad_theta)[0] += scale * g_theta;
  return scale * total;
}

Simulation LinearModel::simulate(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("simulate: N must be at least 1");
  Engine engine = make_engine(seed, Stream::simulate);
  StandardNormal normal;
  Simulation sim;
  sim.theta = Vector::Constant(1, normal(engine));
  sim.z.resize(n, 1);
  RowMatrix x(n, 1);
  for (int i = 0; i < n; ++i) {
    sim.z(i, 0) = normal(engine);
    x(i, 0) = sim.theta[0] + tau_ * sim.z(i, 0) + sigma_ * normal(engine);
  }
  sim.data = make_dataset(std::move(x), seed);
  return sim;
}

// ------------------------------------------------------------- nonlinear

NonlinearModel::NonlinearModel(double std_floor, int window)
    : Model(window, {{"std_floor", std_floor}}), std_floor_(std_floor) {
  if (!(std_floor > 0.0)) throw std::invalid_argument("nonlinear model: std_floor must be positive");
}

double NonlinearModel::log_prior_theta(const Vector& theta, Vector* grad_theta) const {
  return standard_normal_log_density(theta, grad_theta);
}

double NonlinearModel::accumulate_sites(const Vector& theta, const RowMatrix& z,
                                        const Dataset& data, std::span<const int> sites,
                                        double scale, Vector* grad_theta,
                                        RowMatrix* grad_z) const {
  const double th = theta[0];
  double total = 0.0;
  double g_theta = 0.0;
  for (const int n : sites) {
    const double zn = z(n, 0);
    const double s = std::sin(zn);
    const double c = std::cos(zn);
    const double abs_c = std::abs(c);
    const bool floored = abs_c <= std_floor_;
    const double sd = floored ? std_floor_ : abs_c;
    const double inv_sd = 1.0 / sd;
    const double r = data.x(n, 0) - th - zn * (1.0 + s);
    const double u = r * inv_sd;
    total += -kLog2Pi - 0.5 * zn * zn - std::log(sd) - 0.5 * u * u;
    const double d_mean = u * inv_sd;  // d/d(mean) of the emission term
    if (grad_z) {
      const double mean_prime = 1.0 + s + zn * c;
      const double sd_prime = floored ? 0.0 : (c > 0.0 ? -s : s);
      const double d_sd = (u * u - 1.0) * inv_sd;
      (*grad_z)(n, 0) += scale * (-zn + d_mean * mean_prime + d_sd * sd_prime);
    }
    g_theta += d_mean;
  }
  if (grad_theta) (*grad_theta)[0] += scale * g_theta;
  return scale * total;
}

Simulation NonlinearModel::simulate(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("simulate: N must be at least 1");
  Engine engine = make_engine(seed, Stream::simulate);
  StandardNormal normal;
  Simulation sim;
  sim.theta = Vector::Constant(1, normal(engine));
  sim.z.resize(n, 1);
  RowMatrix x(n, 1);
  for (int i = 0; i < n; ++i) {
    const double zn = normal(engine);
    sim.z(i, 0) = zn;
    const double sd = std::max(std::abs(std::cos(zn)), std_floor_);
    x(i, 0) = sim.theta[0] + zn * (1.0 + std::sin(zn)) + sd * normal(engine);
  }
  sim.data = make_dataset(std::move(x), seed);
  return sim;
}

// ------------------------------------------------------------------- saw

SawModel::SawModel(double alpha, double x0, int window)
    : Model(window, {{"alpha", alpha}, {"x0", x0}}), alpha_(alpha), x0_(x0) {}

double SawModel::log_prior_theta(const Vector& theta, Vector* grad_theta) const {
  return standard_normal_log_density(theta, grad_theta);
}

double SawModel::accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                                  std::span<const int> sites, double scale, Vector* grad_theta,
                                  RowMatrix* grad_z) const {
  const double th = theta[0];
  double total = 0.0;
  double g_theta = 0.0;
  for (const int n : sites) {
    const double zn = z(n, 0);
    const double d = zn - previous_x(data, n);
    const double r = data.x(n, 0) - alpha_ * (th + zn);
    total += -kLog2Pi - 0.5 * d * d - 0.5 * r * r;
    if (grad_z) (*grad_z)(n, 0) += scale * (-d + alpha_ * r);
    g_theta += alpha_ * r;
  }
  if (grad_theta) (*grad_theta)[0] += scale * g_theta;
  return scale * total;
}

Simulation SawModel::simulate(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("simulate: N must be at least 1");
  Engine engine = make_engine(seed, Stream::simulate);
  StandardNormal normal;
  Simulation sim;
  sim.theta = Vector::Constant(1, normal(engine));
  sim.z.resize(n, 1);
  RowMatrix x(n, 1);
  double previous = x0_;
  for (int i = 0; i < n; ++i) {
    sim.z(i, 0) = previous + normal(engine);
    x(i, 0) = alpha_ * (sim.theta[0] + sim.z(i, 0)) + normal(engine);
    previous = x(i, 0);
  }
  sim.data = make_dataset(std::move(x), seed);
  sim.data.notes.push_back("x0 = " + text::format_double(x0_) + " (unobserved predecessor of site 0)");
  return sim;
}

// ------------------------------------------------------------------- hmm

HmmModel::HmmModel(bool anchored, bool learn_theta, double theta_hat, int window)
    : Model(window, {{"anchored", anchored ? 1.0 : 0.0},
                     {"learn_theta", learn_theta ? 1.0 : 0.0},
                     {"theta_hat", theta_hat}}),
      anchored_(anchored),
      learn_theta_(learn_theta),
      theta_hat_(theta_hat) {}

double HmmModel::log_prior_theta(const Vector& theta, Vector* grad_theta) const {
  if (!learn_theta_) return 0.0;
  return standard_normal_log_density(theta, grad_theta);
}

double HmmModel::accumulate_sites(const Vector& theta, const RowMatrix& z, const Dataset& data,
                                  std::span<const int> sites, double scale, Vector* grad_theta,
                                  RowMatrix* grad_z) const {
  const double th = learn_theta_ ? theta[0] : theta_hat_;
  double total = 0.0;
  double g_theta = 0.0;
  for (const int n : sites) {
    const double zn = z(n, 0);
    double g_zn = 0.0;
    if (n == 0) {
      if (anchored_) {
        total += -kHalfLog2Pi - 0.5 * zn * zn;
        g_zn -= zn;
      }
    } else {
      const double d = zn - z(n - 1, 0);
      total += -kHalfLog2Pi - 0.5 * d * d;
      g_zn -= d;
      if (grad_z) (*grad_z)(n - 1, 0) += scale * d;
    }
    const double r = data.x(n, 0) - zn - th;
    total += -kHalfLog2Pi - 0.5 * r * r;
    g_zn += r;
    g_theta += r;
    if (grad_z) (*grad_z)(n, 0) += scale * g_zn;
  }
  if (grad_theta && learn_theta_) (*grad_theta)[0] += scale * g_theta;
  return scale * total;
}

Simulation HmmModel::simulate(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("simulate: N must be at least 1");
  Engine engine = make_engine(seed, Stream::simulate);
  StandardNormal normal;
  Simulation sim;
  sim.theta = learn_theta_ ? Vector::Constant(1, normal(engine)) : Vector();
  const double th = learn_theta_ ? sim.theta[0] : theta_hat_;
  sim.z.resize(n, 1);
  RowMatrix x(n, 1);
  // A flat initial prior cannot be sampled; both variants start from N(0,1).
  double previous = 0.0;
  for (int i = 0; i < n; ++i) {
    sim.z(i, 0) = previous + normal(engine);
    x(i, 0) = sim.z(i, 0) + th + normal(engine);
    previous = sim.z(i, 0);
  }
  sim.data = make_dataset(std::move(x), seed);
  return sim;
}

// --------------------------------------------------------------- decoder

DecoderModel::DecoderModel(int latent_dim, int hidden, int output_dim, double slope, int window)
    : Model(window, {{"latent_dim", latent_dim},
                     {"hidden", hidden},
                     {"output_dim", output_dim},
                     {"slope", slope}}),
      latent_dim_(latent_dim),
      hidden_(hidden),
      output_dim_(output_dim),
      slope_(slope) {
  if (latent_dim < 1 || hidden < 1 || output_dim < 1) {
    throw std::invalid_argument("decoder model: dimensions must be positive");
  }
}

int DecoderModel::theta_dim() const {
  return hidden_ * latent_dim_ + hidden_ + output_dim_ * hidden_ + output_dim_;
}

Vector DecoderModel::decode(const Vector& theta, const Vector& z) const {
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * latent_dim_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + output_dim_ * hidden_;
  Vector h(hidden_);
  for (int j = 0; j < hidden_; ++j) {
    double a = b1[j];
    for (int i = 0; i < latent_dim_; ++i) a += w1[j * latent_dim_ + i] * z[i];
    h[j] = a > 0.0 ? a : slope_ * a;
  }
  Vector out(output_dim_);
  for (int o = 0; o < output_dim_; ++o) {
    double a = b2[o];
    for (int j = 0; j < hidden_; ++j) a += w2[o * hidden_ + j] * h[j];
    out[o] = a;
  }
  return out;
}

double DecoderModel::log_prior_theta(const Vector& theta, Vector* grad_theta) const {
  return standard_normal_log_density(theta, grad_theta);
}

double DecoderModel::accumulate_sites(const Vector& theta, const RowMatrix& z,
                                      const Dataset& data, std::span<const int> sites,
                                      double scale, Vector* grad_theta,
                                      RowMatrix* grad_z) const {
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * latent_dim_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + output_dim_ * hidden_;
  std::vector<double> pre(hidden_), h(hidden_), r(output_dim_), dh(hidden_);
  double* gw1 = grad_theta ? grad_theta->data() : nullptr;
  double* gb1 = gw1 ? gw1 + hidden_ * latent_dim_ : nullptr;
  double* gw2 = gb1 ? gb1 + hidden_ : nullptr;
  double* gb2 = gw2 ? gw2 + output_dim_ * hidden_ : nullptr;
  const double log_norm = -kHalfLog2Pi * static_cast<double>(latent_dim_ + output_dim_);
  double total = 0.0;
  for (const int n : sites) {
    double site = log_norm;
    for (int i = 0; i < latent_dim_; ++i) site -= 0.5 * z(n, i) * z(n, i);
    for (int j = 0; j < hidden_; ++j) {
      double a = b1[j];
      for (int i = 0; i < latent_dim_; ++i) a += w1[j * latent_dim_ + i] * z(n, i);
      pre[j] = a;
      h[j] = a > 0.0 ? a : slope_ * a;
    }
    for (int o = 0; o < output_dim_; ++o) {
      double a = b2[o];
      for (int j = 0; j < hidden_; ++j) a += w2[o * hidden_ + j] * h[j];
      r[o] = data.x(n, o) - a;
      site -= 0.5 * r[o] * r[o];
    }
    total += site;
    if (!grad_theta && !grad_z) continue;
    for (int j = 0; j < hidden_; ++j) {
      double acc = 0.0;
      for (int o = 0; o < output_dim_; ++o) acc += w2[o * hidden_ + j] * r[o];
      dh[j] = acc * (pre[j] > 0.0 ? 1.0 : slope_);
    }
    if (grad_theta) {
      for (int o = 0; o < output_dim_; ++o) {
        gb2[o] += scale * r[o];
        for (int j = 0; j < hidden_; ++j) gw2[o * hidden_ + j] += scale * r[o] * h[j];
      }
      for (int j = 0; j < hidden_; ++j) {
        gb1[j] += scale * dh[j];
        for (int i = 0; i < latent_dim_; ++i) gw1[j * latent_dim_ + i] += scale * dh[j] * z(n, i);
      }
    }
    if (grad_z) {
      for (int i = 0; i < latent_dim_; ++i) {
        double acc = -z(n, i);
        for (int j = 0; j < hidden_; ++j) acc += w1[j * latent_dim_ + i] * dh[j];
        (*grad_z)(n, i) += scale * acc;
      }
    }
  }
  return scale * total;
}

Simulation DecoderModel::simulate(int n, std::uint64_t seed) const {
  if (n < 1) throw std::invalid_argument("simulate: N must be at least 1");
  Engine engine = make_engine(seed, Stream::simulate);
  StandardNormal normal;
  Simulation sim;
  sim.theta.resize(theta_dim());
  normal.fill(engine, sim.theta.data(), static_cast<std::size_t>(sim.theta.size()));
  sim.z.resize(n, latent_dim_);
  RowMatrix x(n, output_dim_);
  for (int i = 0; i < n; ++i) {
    Vector zi(latent_dim_);
    normal.fill(engine, zi.data(), static_cast<std::size_t>(latent_dim_));
    sim.z.row(i) = zi.transpose();
    const Vector mean = decode(sim.theta, zi);
    for (int o = 0; o < output_dim_; ++o) x(i, o) = mean[o] + normal(engine);
  }
  sim.data = make_dataset(std::move(x), seed);
  return sim;
}

// --------------------------------------------------------------- factory

std::vector<std::string> model_names() { return {"linear", "nonlinear", "saw", "hmm", "decoder"}; }

Hyperparams default_hyperparams(const std::string& name) {
  if (name == "linear") return {{"tau", 1.0}, {"sigma", 1.0}};
  if (name == "nonlinear") return {{"std_floor", 1e-3}};
  if (name == "saw") return {{"alpha", 0.5}, {"x0", 0.0}};
  if (name == "hmm") return {{"anchored", 1.0}, {"learn_theta", 0.0}, {"theta_hat", 0.0}};
  if (name == "decoder") {
    return {{"latent_dim", 2.0}, {"hidden", 8.0}, {"output_dim", 4.0}, {"slope", 0.01}};
  }
  throw std::invalid_argument("unknown model '" + name + "'");
}

std::shared_ptr<const Model> make_model(const std::string& name, const Hyperparams& overrides,
                                        int window) {
  Hyperparams hp = default_hyperparams(name);
  for (const auto& [key, value] : overrides) {
    if (!hp.contains(key)) {
      throw std::invalid_argument("model '" + name + "' has no hyperparameter '" + key + "'");
    }
    hp[key] = value;
  }
  if (name == "linear") return std::make_shared<LinearModel>(hp["tau"], hp["sigma"], window);
  if (name == "nonlinear") return std::make_shared<NonlinearModel>(hp["std_floor"], window);
  if (name == "saw") return std::make_shared<SawModel>(hp["alpha"], hp["x0"], window);
  if (name == "hmm") {
    return std::make_shared<HmmModel>(hp["anchored"] != 0.0, hp["learn_theta"] != 0.0,
                                      hp["theta_hat"], window);
  }
  return std::make_shared<DecoderModel>(static_cast<int>(hp["latent_dim"]),
                                        static_cast<int>(hp["hidden"]),
                                        static_cast<int>(hp["output_dim"]), hp["slope"], window);
}

}  // namespace avilab
