#include "avilab/elbo.hpp"
#include "avilab/models.hpp"
#include "avilab/oracles.hpp"
#include "random_state.hpp"

#include "doctest.h"

#include <cmath>

using namespace avilab;

namespace {

Dataset column(std::initializer_list<double> v) {
  RowMatrix x(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (const double a : v) x(i++, 0) = a;
  return Dataset(std::move(x));
}

// z_n ~ N(0, 1) and nothing else.
class PriorOnly final : public Model {
 public:
  PriorOnly() : Model(1, {}) {}
  std::string name() const override { return "prior_only"; }
  int theta_dim() const override { return 0; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }
  double log_prior_theta(const Vector&, Vector*) const override { return 0.0; }
  double accumulate_sites(const Vector&, const RowMatrix& z, const Dataset&, std::span<const int> sites,
                          double scale, Vector*, RowMatrix* grad_z) const override {
    double total = 0.0;
    for (const int n : sites) {
      total += -kHalfLog2Pi - 0.5 * z(n, 0) * z(n, 0);
      if (grad_z) (*grad_z)(n, 0) -= scale * z(n, 0);
    }
    return scale * total;
  }
  Simulation simulate(int, std::uint64_t) const override { throw std::logic_error("unused"); }
};

// Quadratic log density: theta ~ N(1, 1/2), z_n | theta ~ N(theta, 1).
class Quadratic final : public Model {
 public:
  Quadratic() : Model(1, {}) {}
  std::string name() const override { return "quadratic"; }
  int theta_dim() const override { return 1; }
  int z_dim() const override { return 1; }
  int x_dim() const override { return 1; }
  double log_prior_theta(const Vector& t, Vector* g) const override {
    if (g) (*g)[0] -= 2.0 * (t[0] - 1.0);
    return -(t[0] - 1.0) * (t[0] - 1.0);
  }
  double accumulate_sites(const Vector& t, const RowMatrix& z, const Dataset&, std::span<const int> sites,
                          double scale, Vector* g_theta, RowMatrix* grad_z) const override {
    double total = 0.0;
    for (const int n : sites) {
      const double d = z(n, 0) - t[0];
      total -= 0.5 * d * d;
      if (grad_z) (*grad_z)(n, 0) -= scale * d;
      if (g_theta) (*g_theta)[0] += scale * d;
    }
    return scale * total;
  }
  Simulation simulate(int, std::uint64_t) const override { throw std::logic_error("unused"); }
};

std::vector<FamilySpec> all_families() {
  return {{Algorithm::fvi, {}},
          {Algorithm::constant, {}},
          {Algorithm::avi, PolynomialArch{0}},
          {Algorithm::avi, PolynomialArch{2}},
          {Algorithm::avi, MlpArch{{4, 4}, Activation::relu}},
          {Algorithm::avi, MlpArch{{4, 4}, Activation::leaky_relu}}};
}

// Exact ELBO of a factorized state for the linear model.
double linear_exact_elbo(const LinearModel& m, const FactorizedState& s, const Dataset& data) {
  const double s2 = m.sigma() * m.sigma();
  const double tau = m.tau();
  const double mt = s.q_theta.mean[0];
  const double vt = s.q_theta.variance()[0];
  double elbo = 0.5 * std::log(2.0 * M_PI * M_E * vt);
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const double mn = s.q_z[static_cast<std::size_t>(n)].mean[0];
    const double vn = s.q_z[static_cast<std::size_t>(n)].variance()[0];
    const double r = data.x(n, 0) - mt - tau * mn;
    elbo += -2.0 * kHalfLog2Pi - std::log(m.sigma()) - 0.5 * (mn * mn + vn) -
            (r * r + vt + tau * tau * vn) / (2.0 * s2) + 0.5 * std::log(2.0 * M_PI * M_E * vn);
  }
  return elbo;
}

}  // namespace

TEST_CASE("log p - log q vanishes when q equals the prior") {
  const PriorOnly model;
  const Dataset data = column({0, 0, 0});
  const FactorizedState state{DiagGaussian(Vector(0), Vector(0)),
                              std::vector<DiagGaussian>(3, DiagGaussian::standard(1))};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const NoiseBlock noise = NoiseBlock::generate(7, model, data, seed);
    const ElboEstimate e = elbo_estimate(model, state, data, noise);
    CHECK(std::abs(e.value) < 1e-12);
    CHECK(e.grad.size() == 6);
  }
}

TEST_CASE("decoupled site gradient shrinks with many draws") {
  const LinearModel model(0.0, 1.0);
  const Dataset data = column({0.7});
  const FactorizedState state{DiagGaussian(Vector::Constant(1, 0.7), Vector::Zero(1)),
                              {DiagGaussian::standard(1)}};
  const NoiseBlock noise = NoiseBlock::generate(10000, model, data, 3);
  const ElboEstimate e = elbo_estimate(model, state, data, noise);
  CHECK(std::abs(e.grad[2]) < 0.05);
  CHECK(std::abs(e.grad[3]) < 0.05);
}

TEST_CASE("estimator is a sample mean") {
  const LinearModel model(1.0, 1.0);
  const Simulation sim = model.simulate(5, 1);
  const VariationalState state = testing::random_state(model, sim.data, {Algorithm::fvi, {}}, 2);
  const NoiseBlock one = NoiseBlock::generate(1, model, sim.data, 4);
  NoiseBlock two = one;
  two.samples = 2;
  two.draws.resize(2, one.draws.cols());
  two.draws.row(0) = one.draws.row(0);
  two.draws.row(1) = one.draws.row(0);
  CHECK(elbo_estimate(model, state, sim.data, one).value ==
        elbo_estimate(model, state, sim.data, two).value);
}

TEST_CASE("quadratic density gradient is exact") {
  const Quadratic model;
  const Dataset data = column({0, 0, 0, 0});
  for (const auto& family : all_families()) {
    const VariationalState state = testing::random_state(model, data, family, 5);
    const NoiseBlock noise = NoiseBlock::generate(10, model, data, 6);
    CHECK(finite_diff_check(model, state, data, noise, 1e-5) <= 1e-7);
  }
}

TEST_CASE("gradients match finite differences on smooth estimators") {
  for (const std::string name : {"linear", "saw", "hmm"}) {
    for (const int window : {1, 2}) {
      const auto model = make_model(name, {}, window);
      const Simulation sim = model->simulate(10, 3);
      for (const auto& family : all_families()) {
        if (family.architecture && std::holds_alternative<MlpArch>(*family.architecture)) continue;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
          const VariationalState state = testing::random_state(*model, sim.data, family, seed);
          const NoiseBlock noise = NoiseBlock::generate(10, *model, sim.data, seed + 100);
          INFO(name << " window " << window << " " << capacity_label(state) << " seed " << seed);
          CHECK(finite_diff_check(*model, state, sim.data, noise, 1e-5) <= 1e-6);
        }
      }
    }
  }
}

// ReLU kinks and the nonlinear model's near-zero noise scale can spoil a
// single step (a kink inside +-h, or O(h^2) truncation blowing up), so the
// better of two steps is taken here.
TEST_CASE("gradients match finite differences for every model and family") {
  for (const auto& name : model_names()) {
    for (const int window : {1, 2}) {
      const auto model = make_model(name, {}, window);
      const Simulation sim = model->simulate(10, 3);
      for (const auto& family : all_families()) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          const VariationalState state = testing::random_state(*model, sim.data, family, seed);
          const NoiseBlock noise = NoiseBlock::generate(10, *model, sim.data, seed + 100);
          const double err = std::min(finite_diff_check(*model, state, sim.data, noise, 1e-5),
                                      finite_diff_check(*model, state, sim.data, noise, 1e-6));
          INFO(name << " window " << window << " " << capacity_label(state) << " seed " << seed);
          CHECK(err <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("estimates are deterministic") {
  const auto model = make_model("nonlinear");
  const Simulation sim = model->simulate(20, 1);
  const VariationalState state =
      testing::random_state(*model, sim.data, {Algorithm::avi, MlpArch{{8, 8}, Activation::relu}}, 1);
  const NoiseBlock a = NoiseBlock::generate(10, *model, sim.data, 9);
  const NoiseBlock b = NoiseBlock::generate(10, *model, sim.data, 9);
  CHECK(a.draws == b.draws);
  const ElboEstimate ea = elbo_estimate(*model, state, sim.data, a);
  const ElboEstimate eb = elbo_estimate(*model, state, sim.data, b);
  CHECK(ea.value == eb.value);
  CHECK(ea.grad == eb.grad);
  const NoiseBlock c = NoiseBlock::generate(10, *model, sim.data, 10);
  CHECK(a.draws != c.draws);
}

TEST_CASE("embedding preserves the estimate bit for bit") {
  for (const auto& name : model_names()) {
    const auto model = make_model(name, {}, 2);
    const Simulation sim = model->simulate(15, 2);
    for (const auto& family : all_families()) {
      if (family.algorithm == Algorithm::fvi) continue;
      const VariationalState state = testing::random_state(*model, sim.data, family, 3);
      const VariationalState embedded = embed_to_factorized(state, *model, sim.data);
      const NoiseBlock noise = NoiseBlock::generate(10, *model, sim.data, 4);
      CHECK(elbo_estimate(*model, state, sim.data, noise).value ==
            elbo_estimate(*model, embedded, sim.data, noise).value);
    }
  }
}

TEST_CASE("minibatch estimates average to the full-batch estimate") {
  for (const auto& name : model_names()) {
    const auto model = make_model(name);
    const Simulation sim = model->simulate(12, 4);
    const VariationalState state = testing::random_state(*model, sim.data, {Algorithm::fvi, {}}, 5);
    const NoiseBlock noise = NoiseBlock::generate(6, *model, sim.data, 6);
    const ElboEstimate full = elbo_estimate(*model, state, sim.data, noise);
    const std::vector<std::vector<int>> parts{{0, 3, 6, 9}, {1, 4, 7, 10}, {2, 5, 8, 11}};
    double avg = 0.0;
    Vector avg_grad = Vector::Zero(full.grad.size());
    for (const auto& part : parts) {
      const ElboEstimate e = elbo_estimate(*model, state, sim.data, noise, part);
      avg += e.value / 3.0;
      avg_grad += e.grad / 3.0;
    }
    CHECK(std::abs(avg - full.value) < 1e-10 * std::max(1.0, std::abs(full.value)));
    CHECK((avg_grad - full.grad).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, full.grad.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("minibatch rescales sites but not theta") {
  const LinearModel model(1.0, 1.0);
  const Dataset data = column({1, 2, 3, 4});
  const FactorizedState state{DiagGaussian::standard(1), std::vector<DiagGaussian>(4, DiagGaussian::standard(1))};
  const NoiseBlock noise = NoiseBlock::generate(1, model, data, 1);
  const std::vector<int> batch{2};
  const ElboEstimate e = elbo_estimate(model, state, data, noise, batch);
  Vector theta(1);
  theta[0] = noise.draws(0, 0);
  RowMatrix z(4, 1);
  for (int n = 0; n < 4; ++n) z(n, 0) = noise.draws(0, 1 + n);
  const double eps_z = noise.draws(0, 3);
  const double expected = 4.0 * (model.site_term(theta, z, data, 2) + kHalfLog2Pi + 0.5 * eps_z * eps_z) +
                          kHalfLog2Pi + 0.5 * theta[0] * theta[0];
  CHECK(e.value == doctest::Approx(expected).epsilon(1e-13));
  CHECK_THROWS(elbo_estimate(model, state, data, noise, std::vector<int>{4}));
}

TEST_CASE("estimator is unbiased at the linear optimum") {
  const LinearModel model(1.0, 1.0);
  const Simulation sim = model.simulate(50, 3);
  const FactorizedState state = to_state(linear_fvi_optimum(sim.data, 1.0, 1.0));
  const double exact = linear_exact_elbo(model, state, sim.data);
  std::vector<double> values;
  for (std::uint64_t s = 0; s < 100; ++s) {
    values.push_back(elbo_estimate(model, state, sim.data, NoiseBlock::generate(1, model, sim.data, s), {}, false).value);
  }
  double mean = 0.0;
  for (const double v : values) mean += v / 100.0;
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean) / 99.0;
  CHECK(std::abs(mean - exact) < 4.0 * std::sqrt(var / 100.0));
}

TEST_CASE("elbo_estimate validation and error reporting") {
  const LinearModel model(1.0, 1.0);
  const Dataset data = column({1, 2});
  const FactorizedState state{DiagGaussian::standard(1), std::vector<DiagGaussian>(2, DiagGaussian::standard(1))};
  const NoiseBlock wrong = NoiseBlock::generate(3, 1, 3, 1, 0);
  CHECK_THROWS_AS(elbo_estimate(model, state, data, wrong), DimensionError);
  CHECK_THROWS(NoiseBlock::generate(0, model, data, 0));

  const Dataset huge = column({0.0, 1e200});
  const NoiseBlock noise = NoiseBlock::generate(2, model, huge, 0);
  try {
    elbo_estimate(model, state, huge, noise);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    REQUIRE(e.site.has_value());
    CHECK(*e.site == 1);
    REQUIRE(e.sample.has_value());
    CHECK(*e.sample == 0);
  }
}

TEST_CASE("fixed-theta HMM has only site parameters") {
  const auto model = make_model("hmm");
  const Simulation sim = model->simulate(4, 1);
  const VariationalState state = initial_state(*model, sim.data, {Algorithm::fvi, {}}, 0);
  const NoiseBlock noise = NoiseBlock::generate(3, *model, sim.data, 0);
  CHECK(elbo_estimate(*model, state, sim.data, noise).grad.size() == 8);
  CHECK(finite_diff_check(*model, state, sim.data, noise, 1e-5) <= 1e-6);
}
