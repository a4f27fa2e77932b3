#include "avilab/harness.hpp"

#include "avilab/models.hpp"
#include "avilab/oracles.hpp"
#include "avilab/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace avilab {

namespace {

constexpr const char* kRunMarker = "# avilab run";

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::string fmt(double v) { return text::format_double(v); }

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string arm_label(const std::string& capacity, int window) {
  return window > 1 ? capacity + "/w" + std::to_string(window) : capacity;
}

std::optional<double> RunFile::wall_ms_to_converge() const {
  if (!converged_at) return std::nullopt;
  for (const auto& s : steps) {
    if (s.step == *converged_at) return s.wall_time_ms;
  }
  return std::nullopt;
}

RunFile to_run_file(const RunRecord& record, int window, int n) {
  RunFile run;
  run.model = record.model;
  run.algo = record.algo;
  run.capacity = record.capacity;
  run.window = window;
  run.n = n;
  run.seed = record.seed;
  run.converged_at = record.converged_at;
  run.final_elbo = record.final_elbo;
  run.error = record.error;
  run.steps = record.steps;
  return run;
}

void write_run_csv(std::ostream& out, const RunFile& run) {
  out << kRunMarker << "\n";
  out << "# model = " << run.model << "\n";
  out << "# algo = " << run.algo << "\n";
  out << "# capacity = " << run.capacity << "\n";
  out << "# window = " << run.window << "\n";
  out << "# n = " << run.n << "\n";
  out << "# seed = " << run.seed << "\n";
  out << "# converged_at = " << (run.converged_at ? std::to_string(*run.converged_at) : "none") << "\n";
  out << "# final_elbo = " << fmt(run.final_elbo) << "\n";
  std::string error = run.error;
  std::replace(error.begin(), error.end(), '\n', ' ');
  out << "# error = " << error << "\n";
  out << "model,algo,seed,step,wall_time_ms,elbo\n";
  for (const auto& s : run.steps) {
    out << run.model << "," << run.algo << "," << run.seed << "," << s.step << ","
        << fmt(s.wall_time_ms) << "," << fmt(s.elbo) << "\n";
  }
}

void write_run_csv(const std::filesystem::path& path, const RunFile& run) {
  auto out = open_out(path);
  write_run_csv(out, run);
}

RunFile read_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run file " + path.string());
  RunFile run;
  run.path = path;
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kRunMarker) {
    throw std::invalid_argument(path.string() + " is not a run file");
  }
  bool header_seen = false;
  while (std::getline(in, line)) {
    const auto t = std::string(text::trim(line));
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto eq = t.find('=');
      if (eq == std::string::npos) continue;
      const auto key = std::string(text::trim(std::string_view(t).substr(1, eq - 1)));
      const auto value = std::string(text::trim(std::string_view(t).substr(eq + 1)));
      if (key == "model") run.model = value;
      else if (key == "algo") run.algo = value;
      else if (key == "capacity") run.capacity = value;
      else if (key == "window") run.window = static_cast<int>(text::parse_int(value));
      else if (key == "n") run.n = static_cast<int>(text::parse_int(value));
      else if (key == "seed") run.seed = static_cast<std::uint64_t>(text::parse_int(value));
      else if (key == "converged_at" && value != "none") run.converged_at = static_cast<int>(text::parse_int(value));
      else if (key == "final_elbo") run.final_elbo = value.empty() ? std::nan("") : text::parse_double(value);
      else if (key == "error") run.error = value;
      continue;
    }
    if (!header_seen) {
      if (t != "model,algo,seed,step,wall_time_ms,elbo") {
        throw std::invalid_argument(path.string() + ": unexpected column header");
      }
      header_seen = true;
      continue;
    }
    const auto cols = text::split(t, ',');
    if (cols.size() != 6) throw std::invalid_argument(path.string() + ": malformed row");
    run.steps.push_back({static_cast<int>(text::parse_int(cols[3])), text::parse_double(cols[4]),
                         text::parse_double(cols[5])});
  }
  return run;
}

std::string run_stem(const RunFile& run) {
  std::string arm = run.arm();
  for (char& c : arm) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '-';
  }
  while (!arm.empty() && arm.back() == '-') arm.pop_back();
  return run.model + "_" + arm + "_seed" + std::to_string(run.seed);
}

std::shared_ptr<const Model> build_model(const ExperimentConfig& cfg) {
  return make_model(cfg.model, cfg.hyperparams, cfg.window);
}

Dataset build_dataset(const ExperimentConfig& cfg, const Model& model) {
  if (!cfg.data_path.empty()) {
    Dataset data = read_dataset_csv(cfg.data_path);
    model.check_data(data);
    if (data.size() < model.window()) throw std::invalid_argument("window exceeds dataset size");
    return data;
  }
  return model.simulate(cfg.n, cfg.data_seed).data;
}

std::vector<RunRecord> run_seeds(const Model& model, const Dataset& data, const ExperimentConfig& cfg,
                                 unsigned threads) {
  cfg.validate();
  const std::size_t jobs = cfg.seeds.size();
  std::vector<RunRecord> records(jobs);
  const FamilySpec family = cfg.family();
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      OptimizerConfig opt = cfg.optimizer;
      opt.seed = cfg.seeds[i];
      const VariationalState init = initial_state(model, data, family, opt.seed);
      records[i] = fit(model, init, data, opt);
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
  if (threads <= 1) {
    worker();
    return records;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return records;
}

std::vector<std::filesystem::path> write_fit_outputs(const std::vector<RunRecord>& records,
                                                     const Model& model, const Dataset& data,
                                                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  auto summary = open_out(out_dir / "runs_summary.csv");
  summary << "model,algo,capacity,window,seed,steps,converged_at,wall_time_ms,final_elbo,error\n";
  for (const auto& record : records) {
    const RunFile run = to_run_file(record, model.window(), static_cast<int>(data.size()));
    const auto stem = run_stem(run);
    const auto path = out_dir / (stem + ".csv");
    write_run_csv(path, run);
    write_checkpoint(out_dir / (stem + ".state"), record.final_state, model, data);
    paths.push_back(path);
    std::string error = record.error;
    std::replace(error.begin(), error.end(), ',', ';');
    summary << run.model << "," << run.algo << ",\"" << run.capacity << "\"," << run.window << ","
            << run.seed << "," << run.steps.size() << ","
            << (run.converged_at ? std::to_string(*run.converged_at) : "") << ","
            << (run.steps.empty() ? "0" : fmt(run.steps.back().wall_time_ms)) << ","
            << fmt(run.final_elbo) << "," << error << "\n";
  }
  return paths;
}

std::optional<double> oracle_elbo(const Model& model, const Dataset& data,
                                  const OptimizerConfig& cfg) {
  std::optional<FviOptimum> opt;
  if (const auto* m = dynamic_cast<const LinearModel*>(&model); m && data.size() >= 2) {
    opt = linear_fvi_optimum(data, m->tau(), m->sigma());
  } else if (const auto* s = dynamic_cast<const SawModel*>(&model)) {
    opt = saw_fvi_optimum(*s, data);
  } else if (const auto* h = dynamic_cast<const HmmModel*>(&model);
             h && !h->learns_theta() && data.size() >= 2) {
    opt = hmm_fvi_optimum(*h, data);
  }
  if (!opt) return std::nullopt;
  return evaluate_elbo(model, to_state(*opt), data, cfg);
}

SeedSummary summarize(const std::vector<double>& values) {
  SeedSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  s.median = median_of(values);
  if (values.size() > 1) {
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.std_error = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

double mc_tolerance(double se_a, double se_b) {
  return std::max(0.5, 3.0 * std::sqrt(se_a * se_a + se_b * se_b));
}

const ArmReport* GapReport::find(const std::string& arm) const {
  for (const auto& a : arms) {
    if (a.arm == arm) return &a;
  }
  return nullptr;
}

GapReport gap_report(const std::vector<RunFile>& runs, std::optional<double> oracle) {
  if (runs.empty()) throw std::invalid_argument("gap report: no runs");
  GapReport report;
  report.model = runs.front().model;
  report.n = runs.front().n;
  report.oracle_elbo = oracle;
  report.runs = runs;
  std::map<std::string, std::vector<const RunFile*>> by_arm;
  std::vector<std::string> order;
  for (const auto& run : runs) {
    if (run.model != report.model || run.n != report.n) {
      throw std::invalid_argument("gap report: runs mix models or dataset sizes (" + run.model +
                                  ", N=" + std::to_string(run.n) + ")");
    }
    if (!by_arm.count(run.arm())) order.push_back(run.arm());
    by_arm[run.arm()].push_back(&run);
  }
  if (!by_arm.count("fvi")) throw std::invalid_argument("gap report: no F-VI runs");
  if (by_arm.size() < 2) throw std::invalid_argument("gap report: no runs to compare with F-VI");

  const auto make_arm = [](const std::string& arm, const std::vector<const RunFile*>& group) {
    ArmReport a;
    a.arm = arm;
    a.algo = group.front()->algo;
    std::vector<double> finals, steps, walls;
    for (const RunFile* r : group) {
      if (!r->error.empty() || !std::isfinite(r->final_elbo)) {
        ++a.errors;
        continue;
      }
      finals.push_back(r->final_elbo);
      if (r->converged_at) {
        ++a.converged;
        steps.push_back(*r->converged_at);
        if (const auto w = r->wall_ms_to_converge()) walls.push_back(*w);
      }
    }
    a.final_elbo = summarize(finals);
    if (!steps.empty()) a.median_steps_to_converge = median_of(steps);
    if (!walls.empty()) a.median_wall_ms_to_converge = median_of(walls);
    return a;
  };

  const ArmReport reference = make_arm("fvi", by_arm["fvi"]);
  if (reference.final_elbo.count == 0) throw std::invalid_argument("gap report: every F-VI run failed");
  std::stable_sort(order.begin(), order.end(),
                   [](const std::string& a, const std::string& b) { return a == "fvi" && b != "fvi"; });
  for (const auto& arm : order) {
    ArmReport a = make_arm(arm, by_arm[arm]);
    if (arm == "fvi") {
      a.verdict = "reference";
    } else if (a.final_elbo.count == 0) {
      a.verdict = "failed";
    } else {
      a.deficit = reference.final_elbo.median - a.final_elbo.median;
      a.tolerance = mc_tolerance(a.final_elbo.std_error, reference.final_elbo.std_error);
      a.verdict = a.deficit <= a.tolerance ? "closed" : "open";
      a.ordering_ok = a.final_elbo.median <= reference.final_elbo.median + a.tolerance;
    }
    report.arms.push_back(a);
  }
  return report;
}

void write_gap_report(const std::filesystem::path& path, const GapReport& report) {
  auto out = open_out(path);
  out << "model,n,arm,algo,seeds,errors,converged,median_final_elbo,std_error,deficit,mc_tolerance,"
         "verdict,ordering_ok,median_steps_to_converge,median_wall_ms_to_converge,oracle_elbo\n";
  for (const auto& a : report.arms) {
    out << report.model << "," << report.n << ",\"" << a.arm << "\"," << a.algo << ","
        << a.final_elbo.count + a.errors << "," << a.errors << "," << a.converged << ","
        << fmt(a.final_elbo.median) << "," << fmt(a.final_elbo.std_error) << "," << fmt(a.deficit)
        << "," << fmt(a.tolerance) << "," << a.verdict << "," << (a.ordering_ok ? "true" : "false")
        << "," << fmt(a.median_steps_to_converge) << "," << fmt(a.median_wall_ms_to_converge) << ","
        << fmt(report.oracle_elbo) << "\n";
  }
}

void write_gap_seeds(const std::filesystem::path& path, const GapReport& report) {
  auto out = open_out(path);
  out << "arm,algo,seed,final_elbo,steps,converged_at,wall_ms_to_converge,error\n";
  for (const auto& r : report.runs) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    out << "\"" << r.arm() << "\"," << r.algo << "," << r.seed << "," << fmt(r.final_elbo) << ","
        << r.steps.size() << "," << (r.converged_at ? std::to_string(*r.converged_at) : "") << ","
        << fmt(r.wall_ms_to_converge()) << "," << error << "\n";
  }
}

void write_paths_csv(std::ostream& out, const std::vector<RunFile>& runs) {
  out << "algo,capacity,step,wall_time_ms,elbo,seed\n";
  for (const auto& r : runs) {
    for (const auto& s : r.steps) {
      out << r.algo << ",\"" << r.arm() << "\"," << s.step << "," << fmt(s.wall_time_ms) << ","
          << fmt(s.elbo) << "," << r.seed << "\n";
    }
  }
}

void write_convergence_box_csv(std::ostream& out, const std::vector<RunFile>& runs) {
  std::map<std::string, std::vector<const RunFile*>> by_arm;
  for (const auto& r : runs) by_arm[r.arm()].push_back(&r);
  out << "algo,capacity,metric,runs,converged,min,q1,median,q3,max\n";
  for (const auto& [arm, group] : by_arm) {
    std::vector<double> walls, steps;
    for (const RunFile* r : group) {
      if (const auto w = r->wall_ms_to_converge()) {
        walls.push_back(*w);
        steps.push_back(*r->converged_at);
      }
    }
    const auto row = [&](const char* metric, std::vector<double> v) {
      out << group.front()->algo << ",\"" << arm << "\"," << metric << "," << group.size() << ","
          << v.size();
      if (v.empty()) {
        out << ",,,,,\n";
        return;
      }
      std::sort(v.begin(), v.end());
      for (const double p : {0.0, 0.25, 0.5, 0.75, 1.0}) out << "," << fmt(quantile(v, p));
      out << "\n";
    };
    row("wall_ms_to_converge", walls);
    row("steps_to_converge", steps);
  }
}

void write_hmm_means_csv(std::ostream& out, const Dataset& data) {
  const HmmModel anchored(true);
  const HmmModel flat(false);
  const FviOptimum a = hmm_fvi_optimum(anchored, data);
  const FviOptimum f = hmm_fvi_optimum(flat, data);
  const Vector exact_var = hmm_exact_posterior(anchored, data).marginal_variances();
  out << "site,x,mean,var,exact_var,flat_mean,flat_var\n";
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    out << n << "," << fmt(data.x(n, 0)) << "," << fmt(a.site_means[n]) << "," << fmt(a.site_vars[n])
        << "," << fmt(exact_var[n]) << "," << fmt(f.site_means[n]) << "," << fmt(f.site_vars[n]) << "\n";
  }
}

std::vector<RunFile> load_runs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<RunFile> runs;
  for (const auto& p : paths) {
    std::ifstream in(p);
    std::string first;
    if (!std::getline(in, first) || text::trim(first) != kRunMarker) continue;
    runs.push_back(read_run_csv(p));
  }
  return runs;
}

}  // namespace avilab
