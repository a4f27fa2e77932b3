#include "avilab/config.hpp"

#include "avilab/models.hpp"
#include "avilab/text.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace avilab {

namespace {

int to_int(const std::string& key, const std::string& value) {
  const auto v = text::parse_int(value);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw std::invalid_argument(key + ": value out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t to_seed(const std::string& key, const std::string& value) {
  const auto v = text::parse_int(value);
  if (v < 0) throw std::invalid_argument(key + ": seeds must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument(key + ": expected true or false");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text_in) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : text::split(text_in, ',')) {
    const auto t = std::string(text::trim(part));
    if (t.empty()) continue;
    // "a-b" is an inclusive range.
    const auto dash = t.find('-', 1);
    if (dash != std::string::npos) {
      const auto lo = to_seed("seeds", t.substr(0, dash));
      const auto hi = to_seed("seeds", t.substr(dash + 1));
      if (hi < lo) throw std::invalid_argument("seeds: empty range '" + t + "'");
      for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(to_seed("seeds", t));
    }
  }
  if (seeds.empty()) throw std::invalid_argument("seeds: list is empty");
  return seeds;
}

void ExperimentConfig::validate() const {
  const auto names = model_names();
  if (std::find(names.begin(), names.end(), model) == names.end()) {
    throw std::invalid_argument("unknown model '" + model + "'");
  }
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (data_path.empty() && window > n) throw std::invalid_argument("window exceeds n");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (kind != "poly" && kind != "mlp") throw std::invalid_argument("kind must be poly or mlp");
  if (degree < 0) throw std::invalid_argument("degree must be >= 0");
  if (width < 1 || depth < 1) throw std::invalid_argument("mlp width and depth must be >= 1");
  optimizer.validate();
}

FamilySpec ExperimentConfig::family() const {
  FamilySpec spec;
  spec.algorithm = algorithm;
  if (algorithm == Algorithm::avi) {
    if (kind == "poly") {
      spec.architecture = PolynomialArch{degree};
    } else {
      spec.architecture = MlpArch{std::vector<int>(static_cast<std::size_t>(depth), width), activation};
    }
  }
  return spec;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto& opt = cfg.optimizer;
  if (key.rfind("hyper.", 0) == 0) {
    cfg.hyperparams[key.substr(6)] = text::parse_double(value);
  } else if (key == "model") {
    cfg.model = value;
  } else if (key == "n") {
    cfg.n = to_int(key, value);
  } else if (key == "data_seed") {
    cfg.data_seed = to_seed(key, value);
  } else if (key == "data") {
    cfg.data_path = value;
  } else if (key == "algo") {
    cfg.algorithm = parse_algorithm(value);
  } else if (key == "kind") {
    cfg.kind = value;
  } else if (key == "degree") {
    cfg.degree = to_int(key, value);
  } else if (key == "width") {
    cfg.width = to_int(key, value);
  } else if (key == "depth") {
    cfg.depth = to_int(key, value);
  } else if (key == "activation") {
    if (value == "relu") {
      cfg.activation = Activation::relu;
    } else if (value == "leaky_relu") {
      cfg.activation = Activation::leaky_relu;
    } else {
      throw std::invalid_argument("activation must be relu or leaky_relu");
    }
  } else if (key == "window") {
    cfg.window = to_int(key, value);
  } else if (key == "seeds") {
    cfg.seeds = parse_seed_list(value);
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "lr") {
    opt.learning_rate = text::parse_double(value);
  } else if (key == "beta1") {
    opt.beta1 = text::parse_double(value);
  } else if (key == "beta2") {
    opt.beta2 = text::parse_double(value);
  } else if (key == "epsilon") {
    opt.epsilon = text::parse_double(value);
  } else if (key == "steps") {
    opt.max_steps = to_int(key, value);
  } else if (key == "samples") {
    opt.samples = to_int(key, value);
  } else if (key == "convergence_window") {
    opt.convergence_window = to_int(key, value);
  } else if (key == "rel_tol") {
    opt.convergence_rel_tol = text::parse_double(value);
  } else if (key == "stop_on_convergence") {
    opt.stop_on_convergence = to_bool(key, value);
  } else if (key == "batch_size") {
    opt.batch_size = to_int(key, value);
  } else if (key == "eval_samples") {
    opt.eval_samples = to_int(key, value);
  } else if (key == "eval_seed") {
    opt.eval_seed = to_seed(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto t = std::string(text::trim(std::string_view(line).substr(0, hash)));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = std::string(text::trim(std::string_view(t).substr(0, eq)));
    const auto value = std::string(text::trim(std::string_view(t).substr(eq + 1)));
    try {
      set_config_value(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in);
}

std::string emit_config(const ExperimentConfig& cfg) {
  const auto& opt = cfg.optimizer;
  const auto f = [](double v) { return text::format_double(v); };
  std::ostringstream out;
  out << "model = " << cfg.model << "\n";
  for (const auto& [key, value] : cfg.hyperparams) out << "hyper." << key << " = " << f(value) << "\n";
  out << "n = " << cfg.n << "\n";
  out << "data_seed = " << cfg.data_seed << "\n";
  if (!cfg.data_path.empty()) out << "data = " << cfg.data_path.string() << "\n";
  out << "algo = " << algorithm_name(cfg.algorithm) << "\n";
  out << "kind = " << cfg.kind << "\n";
  out << "degree = " << cfg.degree << "\n";
  out << "width = " << cfg.width << "\n";
  out << "depth = " << cfg.depth << "\n";
  out << "activation = " << (cfg.activation == Activation::relu ? "relu" : "leaky_relu") << "\n";
  out << "window = " << cfg.window << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\n";
  out << "out = " << cfg.out_dir.string() << "\n";
  out << "lr = " << f(opt.learning_rate) << "\n";
  out << "beta1 = " << f(opt.beta1) << "\n";
  out << "beta2 = " << f(opt.beta2) << "\n";
  out << "epsilon = " << f(opt.epsilon) << "\n";
  out << "steps = " << opt.max_steps << "\n";
  out << "samples = " << opt.samples << "\n";
  out << "convergence_window = " << opt.convergence_window << "\n";
  out << "rel_tol = " << f(opt.convergence_rel_tol) << "\n";
  out << "stop_on_convergence = " << (opt.stop_on_convergence ? "true" : "false") << "\n";
  out << "batch_size = " << opt.batch_size << "\n";
  out << "eval_samples = " << opt.eval_samples << "\n";
  out << "eval_seed = " << opt.eval_seed << "\n";
  return out.str();
}

}  // namespace avilab
