#include "avilab/variational.hpp"

#include "avilab/text.hpp"

#include <fstream>
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

void append(std::vector<double>& out, const DiagGaussian& g) {
  out.insert(out.end(), g.mean.data(), g.mean.data() + g.mean.size());
  out.insert(out.end(), g.log_std.data(), g.log_std.data() + g.log_std.size());
}

void take(const Vector& params, Eigen::Index& pos, DiagGaussian& g) {
  const auto d = g.dim();
  g.mean = params.segment(pos, d);
  g.log_std = params.segment(pos + d, d);
  pos += 2 * d;
}

const double* window_start(const Model& model, const Dataset& data, int n) {
  return data.x.data() + static_cast<Eigen::Index>(n - model.window() + 1) * data.x_dim();
}

}  // namespace

std::string algorithm_name(Algorithm algo) {
  switch (algo) {
    case Algorithm::fvi: return "fvi";
    case Algorithm::constant: return "constant";
    case Algorithm::avi: return "avi";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fvi") return Algorithm::fvi;
  if (name == "constant") return Algorithm::constant;
  if (name == "avi") return Algorithm::avi;
  throw std::invalid_argument("unknown algorithm '" + name + "' (expected fvi, constant or avi)");
}

Algorithm algorithm_of(const VariationalState& state) {
  return std::visit(Overloaded{[](const FactorizedState&) { return Algorithm::fvi; },
                               [](const ConstantFactorState&) { return Algorithm::constant; },
                               [](const AmortizedState&) { return Algorithm::avi; }},
                    state);
}

const DiagGaussian& q_theta_of(const VariationalState& state) {
  return std::visit([](const auto& s) -> const DiagGaussian& { return s.q_theta; }, state);
}

void check_binding(const VariationalState& state, const Model& model, const Dataset& data) {
  model.check_data(data);
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("variational state not bound to data: " + what);
  };
  require(q_theta_of(state).dim() == model.theta_dim(), "q_theta dimension");
  const auto zd = model.z_dim();
  std::visit(Overloaded{[&](const FactorizedState& s) {
                          require(static_cast<Eigen::Index>(s.q_z.size()) == data.size(),
                                  "factor count differs from N");
                          for (const auto& g : s.q_z) require(g.dim() == zd, "site factor dimension");
                        },
                        [&](const ConstantFactorState& s) {
                          require(s.q_shared.dim() == zd, "shared factor dimension");
                        },
                        [&](const AmortizedState& s) {
                          require(s.inference_fn.input_dim() == model.input_dim(),
                                  "inference function input width vs model window");
                          require(s.inference_fn.z_dim() == zd, "inference function output");
                          const auto edges = model.edge_sites();
                          require(s.edge_factors.size() == edges.size(), "edge factor count");
                          for (const int e : edges) {
                            const auto it = s.edge_factors.find(e);
                            require(it != s.edge_factors.end(), "missing edge factor");
                            require(it->second.dim() == zd, "edge factor dimension");
                          }
                          require(data.size() >= model.window(), "dataset shorter than window");
                        }},
             state);
}

DiagGaussian factor_for_site(const AmortizedState& state, const Model& model,
                             const Dataset& data, int n) {
  if (n < 0 || n >= data.size()) {
    throw std::out_of_range("site " + std::to_string(n) + " outside dataset");
  }
  if (model.is_edge_site(n)) {
    const auto it = state.edge_factors.find(n);
    if (it == state.edge_factors.end()) {
      throw std::invalid_argument("amortized state has no factor for edge site " + std::to_string(n));
    }
    return it->second;
  }
  const Vector out = state.inference_fn.forward(model.window_inputs(data, n));
  const int zd = state.inference_fn.z_dim();
  return DiagGaussian(out.head(zd), out.tail(zd));
}

SiteFactors materialize_factors(const VariationalState& state, const Model& model,
                                const Dataset& data) {
  const auto n_sites = data.size();
  const int zd = model.z_dim();
  SiteFactors f{RowMatrix(n_sites, zd), RowMatrix(n_sites, zd)};
  std::visit(Overloaded{[&](const FactorizedState& s) {
                          for (Eigen::Index n = 0; n < n_sites; ++n) {
                            f.mean.row(n) = s.q_z[static_cast<std::size_t>(n)].mean.transpose();
                            f.log_std.row(n) = s.q_z[static_cast<std::size_t>(n)].log_std.transpose();
                          }
                        },
                        [&](const ConstantFactorState& s) {
                          f.mean.rowwise() = s.q_shared.mean.transpose();
                          f.log_std.rowwise() = s.q_shared.log_std.transpose();
                        },
                        [&](const AmortizedState& s) {
                          std::vector<double> out(static_cast<std::size_t>(2 * zd));
                          for (int n = 0; n < n_sites; ++n) {
                            if (model.is_edge_site(n)) {
                              const auto& g = s.edge_factors.at(n);
                              f.mean.row(n) = g.mean.transpose();
                              f.log_std.row(n) = g.log_std.transpose();
                              continue;
                            }
                            s.inference_fn.forward(window_start(model, data, n), out.data());
                            for (int d = 0; d < zd; ++d) {
                              f.mean(n, d) = out[static_cast<std::size_t>(d)];
                              f.log_std(n, d) = out[static_cast<std::size_t>(zd + d)];
                            }
                          }
                        }},
             state);
  return f;
}

FactorizedState embed_to_factorized(const VariationalState& state, const Model& model,
                                    const Dataset& data) {
  check_binding(state, model, data);
  const SiteFactors f = materialize_factors(state, model, data);
  FactorizedState out;
  out.q_theta = q_theta_of(state);
  out.q_z.reserve(static_cast<std::size_t>(data.size()));
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    out.q_z.emplace_back(f.mean.row(n).transpose(), f.log_std.row(n).transpose());
  }
  return out;
}

Vector param_vector(const VariationalState& state) {
  std::vector<double> out;
  append(out, q_theta_of(state));
  std::visit(Overloaded{[&](const FactorizedState& s) {
                          for (const auto& g : s.q_z) append(out, g);
                        },
                        [&](const ConstantFactorState& s) { append(out, s.q_shared); },
                        [&](const AmortizedState& s) {
                          const auto& p = s.inference_fn.params();
                          out.insert(out.end(), p.data(), p.data() + p.size());
                          for (const auto& [site, g] : s.edge_factors) append(out, g);
                        }},
             state);
  return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

int param_count(const VariationalState& state) {
  const auto two = [](const DiagGaussian& g) { return static_cast<int>(2 * g.dim()); };
  int count = two(q_theta_of(state));
  std::visit(Overloaded{[&](const FactorizedState& s) {
                          for (const auto& g : s.q_z) count += two(g);
                        },
                        [&](const ConstantFactorState& s) { count += two(s.q_shared); },
                        [&](const AmortizedState& s) {
                          count += s.inference_fn.param_count();
                          for (const auto& [site, g] : s.edge_factors) count += two(g);
                        }},
             state);
  return count;
}

void load_params(VariationalState& state, const Vector& params) {
  const int expected = param_count(state);
  if (params.size() != expected) {
    throw DimensionError("parameter vector has length " + std::to_string(params.size()) +
                         ", state expects " + std::to_string(expected));
  }
  Eigen::Index pos = 0;
  std::visit(Overloaded{[&](FactorizedState& s) {
                          take(params, pos, s.q_theta);
                          for (auto& g : s.q_z) take(params, pos, g);
                        },
                        [&](ConstantFactorState& s) {
                          take(params, pos, s.q_theta);
                          take(params, pos, s.q_shared);
                        },
                        [&](AmortizedState& s) {
                          take(params, pos, s.q_theta);
                          const auto np = s.inference_fn.param_count();
                          s.inference_fn.params() = params.segment(pos, np);
                          pos += np;
                          for (auto& [site, g] : s.edge_factors) take(params, pos, g);
                        }},
             state);
}

Vector backprop_site_gradient(const VariationalState& state, const Model& model,
                              const Dataset& data, const Vector& g_theta_mean,
                              const Vector& g_theta_log_std, const RowMatrix& g_mean,
                              const RowMatrix& g_log_std) {
  Vector grad = Vector::Zero(param_count(state));
  const auto td = g_theta_mean.size();
  grad.head(td) = g_theta_mean;
  grad.segment(td, td) = g_theta_log_std;
  Eigen::Index pos = 2 * td;
  const int zd = model.z_dim();
  std::visit(Overloaded{[&](const FactorizedState&) {
                          for (Eigen::Index n = 0; n < data.size(); ++n) {
                            grad.segment(pos, zd) = g_mean.row(n).transpose();
                            grad.segment(pos + zd, zd) = g_log_std.row(n).transpose();
                            pos += 2 * zd;
                          }
                        },
                        [&](const ConstantFactorState&) {
                          grad.segment(pos, zd) = g_mean.colwise().sum().transpose();
                          grad.segment(pos + zd, zd) = g_log_std.colwise().sum().transpose();
                        },
                        [&](const AmortizedState& s) {
                          double* fn_grad = grad.data() + pos;
                          std::vector<double> d_out(static_cast<std::size_t>(2 * zd));
                          Eigen::Index edge_pos = pos + s.inference_fn.param_count();
                          for (int n = 0; n < data.size(); ++n) {
                            if (model.is_edge_site(n)) continue;
                            for (int d = 0; d < zd; ++d) {
                              d_out[static_cast<std::size_t>(d)] = g_mean(n, d);
                              d_out[static_cast<std::size_t>(zd + d)] = g_log_std(n, d);
                            }
                            s.inference_fn.backward(window_start(model, data, n), d_out.data(),
                                                    fn_grad);
                          }
                          for (const auto& [site, g] : s.edge_factors) {
                            grad.segment(edge_pos, zd) = g_mean.row(site).transpose();
                            grad.segment(edge_pos + zd, zd) = g_log_std.row(site).transpose();
                            edge_pos += 2 * zd;
                          }
                        }},
             state);
  return grad;
}

VariationalState initial_state(const Model& model, const Dataset& data, const FamilySpec& family,
                               std::uint64_t seed) {
  model.check_data(data);
  const DiagGaussian q_theta = DiagGaussian::standard(model.theta_dim());
  const DiagGaussian site = DiagGaussian::standard(model.z_dim());
  switch (family.algorithm) {
    case Algorithm::fvi:
      return FactorizedState{q_theta, std::vector<DiagGaussian>(static_cast<std::size_t>(data.size()), site)};
    case Algorithm::constant:
      return ConstantFactorState{q_theta, site};
    case Algorithm::avi: {
      if (!family.architecture) throw std::invalid_argument("avi requires an inference function architecture");
      InferenceFn fn(*family.architecture, model.input_dim(), model.z_dim());
      Engine engine = make_engine(seed, Stream::init);
      fn.initialize(engine);
      std::map<int, DiagGaussian> edges;
      for (const int e : model.edge_sites()) edges.emplace(e, site);
      AmortizedState state{q_theta, std::move(fn), std::move(edges)};
      VariationalState out = std::move(state);
      check_binding(out, model, data);
      return out;
    }
  }
  throw std::invalid_argument("unknown algorithm");
}

std::string capacity_label(const VariationalState& state) {
  return std::visit(Overloaded{[](const FactorizedState&) { return std::string("fvi"); },
                               [](const ConstantFactorState&) { return std::string("constant"); },
                               [](const AmortizedState& s) {
                                 return describe(s.inference_fn.architecture());
                               }},
                    state);
}

void write_checkpoint(const std::filesystem::path& path, const VariationalState& state,
                      const Model& model, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string kind = algorithm_of(state) == Algorithm::fvi        ? "factorized"
                           : algorithm_of(state) == Algorithm::constant ? "constant"
                                                                        : "amortized";
  out << "# kind=" << kind << " model=" << model.name() << " N=" << data.size()
      << " window=" << model.window() << " arch=" << capacity_label(state) << "\n";
  out << "index,value\n";
  const Vector p = param_vector(state);
  for (Eigen::Index i = 0; i < p.size(); ++i) out << i << "," << text::format_double(p[i]) << "\n";
}

VariationalState read_checkpoint(const std::filesystem::path& path, const Model& model,
                                 const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  std::map<std::string, std::string> header;
  std::vector<double> values;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      std::istringstream fields{std::string(t.substr(1))};
      std::string token;
      while (fields >> token) {
        const auto eq = token.find('=');
        if (eq != std::string::npos) header[token.substr(0, eq)] = token.substr(eq + 1);
      }
      continue;
    }
    if (t == "index,value") continue;
    const auto parts = text::split(t, ',');
    if (parts.size() != 2) throw std::invalid_argument("malformed checkpoint row: " + std::string(t));
    values.push_back(text::parse_double(parts[1]));
  }
  const auto get = [&](const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end()) throw std::invalid_argument("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  if (get("model") != model.name()) {
    throw std::invalid_argument("checkpoint is for model '" + get("model") + "'");
  }
  if (text::parse_int(get("N")) != data.size()) {
    throw std::invalid_argument("checkpoint N does not match the dataset");
  }
  if (text::parse_int(get("window")) != model.window()) {
    throw std::invalid_argument("checkpoint window does not match the model");
  }
  const std::string kind = get("kind");
  FamilySpec family;
  if (kind == "factorized") {
    family.algorithm = Algorithm::fvi;
  } else if (kind == "constant") {
    family.algorithm = Algorithm::constant;
  } else if (kind == "amortized") {
    family.algorithm = Algorithm::avi;
    family.architecture = parse_architecture(get("arch"));
  } else {
    throw std::invalid_argument("unknown checkpoint kind '" + kind + "'");
  }
  VariationalState state = initial_state(model, data, family, 0);
  load_params(state, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  return state;
}

}  // namespace avilab
