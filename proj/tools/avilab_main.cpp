// avilab: simulate datasets, fit variational families, compare them.

#include "avilab/config.hpp"
#include "avilab/dataset.hpp"
#include "avilab/harness.hpp"
#include "avilab/models.hpp"
#include "avilab/text.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace avilab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

fs::path default_out() {
  const char* env = std::getenv("AVILAB_OUT");
  return env && *env ? fs::path(env) : fs::path("avilab_out");
}

Hyperparams parse_params(const std::vector<std::string>& items) {
  Hyperparams out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--param expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = text::parse_double(item.substr(eq + 1));
  }
  return out;
}

// Model hyperparameters: those recorded by the simulator, then overrides.
Hyperparams merged_params(const std::string& model, const Dataset& data, const Hyperparams& overrides) {
  Hyperparams out;
  if (data.model == model) {
    const auto known = default_hyperparams(model);
    for (const auto& [k, v] : data.hyperparams) {
      if (known.count(k)) out[k] = v;
    }
  }
  for (const auto& [k, v] : overrides) out[k] = v;
  return out;
}

Dataset default_hmm_data() {
  RowMatrix x = RowMatrix::Ones(100, 1);
  return Dataset(std::move(x));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized, constant-factor and amortized variational inference experiments"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from a model");
  std::string sim_model = "linear";
  int sim_n = 1000;
  std::uint64_t sim_seed = 0;
  std::vector<std::string> sim_params;
  std::string sim_out;
  sim->add_option("--model", sim_model, "Model name")->check(CLI::IsMember(model_names()));
  sim->add_option("--n", sim_n, "Number of sites");
  sim->add_option("--seed", sim_seed, "Simulation seed");
  sim->add_option("--param", sim_params, "Hyperparameter override key=value");
  sim->add_option("--out", sim_out, "Output CSV (default: $AVILAB_OUT/<model>_n<N>_seed<S>.csv)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit one variational family over several seeds");
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> fit_params;
  unsigned threads = 0;
  fit_cmd->add_option("--config", config_path, "key = value config file");
  const auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    fit_cmd->add_option_function<std::string>(
        name, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
  };
  flag("--model", "model", "Model name");
  flag("--n", "n", "Number of simulated sites");
  flag("--data-seed", "data_seed", "Seed of the simulated dataset");
  flag("--data", "data", "Dataset CSV instead of simulating");
  flag("--algo", "algo", "fvi, constant or avi");
  flag("--kind", "kind", "Inference function kind: poly or mlp");
  flag("--degree", "degree", "Polynomial degree");
  flag("--width", "width", "MLP hidden width");
  flag("--depth", "depth", "MLP hidden layers");
  flag("--activation", "activation", "relu or leaky_relu");
  flag("--window", "window", "Observations per inference-function input");
  flag("--seeds", "seeds", "Seed list, e.g. 0-9 or 1,4,7");
  flag("--steps", "steps", "Maximum optimizer steps");
  flag("--samples", "samples", "Monte-Carlo draws per step");
  flag("--lr", "lr", "Adam learning rate");
  flag("--batch", "batch_size", "Minibatch size (0 = full batch)");
  flag("--convergence-window", "convergence_window", "Steps per convergence window");
  flag("--rel-tol", "rel_tol", "Relative convergence tolerance");
  flag("--eval-samples", "eval_samples", "Draws of the final evaluation block");
  flag("--out", "out", "Output directory");
  fit_cmd->add_flag_function(
      "--stop-on-convergence", [&](std::int64_t) { overrides["stop_on_convergence"] = "true"; },
      "Stop each run when it converges");
  fit_cmd->add_option("--param", fit_params, "Hyperparameter override key=value");
  fit_cmd->add_option("--threads", threads, "Worker threads (default: hardware)");

  // gap-report
  auto* gap = app.add_subcommand("gap-report", "Compare run files against F-VI");
  std::string gap_dir;
  std::string gap_data;
  std::string gap_out;
  std::vector<std::string> gap_params;
  int gap_eval = 1000;
  gap->add_option("--runs", gap_dir, "Directory of run files (default: $AVILAB_OUT)");
  gap->add_option("--data", gap_data, "Dataset for the oracle ELBO (default: <runs>/data.csv)");
  gap->add_option("--param", gap_params, "Hyperparameter override key=value");
  gap->add_option("--eval-samples", gap_eval, "Draws of the oracle evaluation block");
  gap->add_option("--out", gap_out, "Output directory (default: the runs directory)");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Continue an amortized run as F-VI");
  std::string diag_run;
  std::string diag_data;
  int extra_steps = 1000;
  std::vector<std::string> diag_params;
  diag->add_option("--run", diag_run, "Run CSV of an avi or constant run")->required();
  diag->add_option("--extra-steps", extra_steps, "F-VI continuation steps");
  diag->add_option("--data", diag_data, "Dataset (default: data.csv next to the run)");
  diag->add_option("--param", diag_params, "Hyperparameter override key=value");

  // figure-data
  auto* fig = app.add_subcommand("figure-data", "Emit plot-ready CSV");
  std::string fig_kind;
  std::string fig_dir;
  std::string fig_data;
  std::string fig_out;
  fig->add_option("kind", fig_kind, "paths, convergence_box or hmm_means")
      ->required()
      ->check(CLI::IsMember({"paths", "convergence_box", "hmm_means"}));
  fig->add_option("--runs", fig_dir, "Directory of run files (default: $AVILAB_OUT)");
  fig->add_option("--data", fig_data, "Observations for hmm_means (default: 100 ones)");
  fig->add_option("--out", fig_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) {
      if (sim_n < 1) throw std::invalid_argument("--n must be at least 1");
      const auto model = make_model(sim_model, parse_params(sim_params));
      const Simulation s = model->simulate(sim_n, sim_seed);
      fs::path out = sim_out.empty() ? default_out() / (sim_model + "_n" + std::to_string(sim_n) +
                                                        "_seed" + std::to_string(sim_seed) + ".csv")
                                     : fs::path(sim_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      write_dataset_csv(out, s.data);
      std::cout << out.string() << "\n";
      return 0;
    }

    if (*fit_cmd) {
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : read_config(config_path);
      if (config_path.empty()) cfg.out_dir = default_out();
      for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
      for (const auto& [k, v] : parse_params(fit_params)) cfg.hyperparams[k] = v;
      cfg.validate();
      const auto model = build_model(cfg);
      const Dataset data = build_dataset(cfg, *model);
      fs::create_directories(cfg.out_dir);
      write_dataset_csv(cfg.out_dir / "data.csv", data);
      {
        std::ofstream c(cfg.out_dir / "fit_config.txt");
        c << emit_config(cfg);
      }
      const auto records = run_seeds(*model, data, cfg, threads);
      const auto paths = write_fit_outputs(records, *model, data, cfg.out_dir);
      int failures = 0;
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        std::cout << paths[i].string() << "  final_elbo=" << text::format_double(r.final_elbo)
                  << "  converged_at=" << (r.converged_at ? std::to_string(*r.converged_at) : "none");
        if (!r.error.empty()) {
          std::cout << "  error: " << r.error;
          ++failures;
        }
        std::cout << "\n";
      }
      return failures ? kExitNumerical : 0;
    }

    if (*gap) {
      const fs::path dir = gap_dir.empty() ? default_out() : fs::path(gap_dir);
      const auto runs = load_runs(dir);
      if (runs.empty()) throw std::invalid_argument("no run files in " + dir.string());
      std::optional<double> oracle;
      const fs::path data_path = gap_data.empty() ? dir / "data.csv" : fs::path(gap_data);
      if (fs::exists(data_path)) {
        const Dataset data = read_dataset_csv(data_path);
        if (data.size() != runs.front().n) {
          throw std::invalid_argument("dataset size differs from the runs' N");
        }
        const auto model =
            make_model(runs.front().model, merged_params(runs.front().model, data, parse_params(gap_params)));
        OptimizerConfig eval;
        eval.eval_samples = gap_eval;
        oracle = oracle_elbo(*model, data, eval);
      }
      const GapReport report = gap_report(runs, oracle);
      const fs::path out = gap_out.empty() ? dir : fs::path(gap_out);
      fs::create_directories(out);
      write_gap_report(out / "gap_report.csv", report);
      write_gap_seeds(out / "gap_report_seeds.csv", report);
      for (const auto& a : report.arms) {
        std::cout << a.arm << ": median final ELBO " << text::format_double(a.final_elbo.median)
                  << ", " << a.verdict;
        if (a.verdict != "reference") {
          std::cout << " (deficit " << text::format_double(a.deficit) << ", tolerance "
                    << text::format_double(a.tolerance) << ")";
        }
        std::cout << "\n";
      }
      if (oracle) std::cout << "oracle ELBO " << text::format_double(*oracle) << "\n";
      return 0;
    }

    if (*diag) {
      const fs::path run_path = diag_run;
      const RunFile run = read_run_csv(run_path);
      if (run.algo == "fvi") throw std::invalid_argument("diagnose needs an avi or constant run");
      const fs::path data_path = diag_data.empty() ? run_path.parent_path() / "data.csv" : fs::path(diag_data);
      const Dataset data = read_dataset_csv(data_path);
      const auto model =
          make_model(run.model, merged_params(run.model, data, parse_params(diag_params)), run.window);
      fs::path state_path = run_path;
      state_path.replace_extension(".state");
      const VariationalState state = read_checkpoint(state_path, *model, data);
      RunRecord record;
      record.model = run.model;
      record.algo = run.algo;
      record.capacity = run.capacity;
      record.seed = run.seed;
      record.steps = run.steps;
      record.final_state = state;
      record.final_elbo = run.final_elbo;
      const fs::path cfg_path = run_path.parent_path() / "fit_config.txt";
      OptimizerConfig opt = fs::exists(cfg_path) ? read_config(cfg_path).optimizer : OptimizerConfig{};
      opt.seed = run.seed;
      const Refinement ref = refine_with_fvi(*model, data, record, extra_steps, opt);
      const std::string verdict = verdict_name(ref.verdict);
      if (ref.verdict != GapVerdict::skipped) {
        RunFile cont = to_run_file(ref.record, model->window(), static_cast<int>(data.size()));
        fs::path cont_path = run_path;
        cont_path.replace_filename(run_path.stem().string() + "_refined.trace");
        write_run_csv(cont_path, cont);
        if (!ref.record.error.empty()) {
          std::cerr << "refinement aborted: " << ref.record.error << "\n";
          return kExitNumerical;
        }
      }
      std::cout << "verdict: " << verdict << "\n";
      if (ref.verdict != GapVerdict::skipped) {
        std::cout << "final ELBO gain from F-VI refinement: " << text::format_double(ref.improvement) << "\n";
      }
      return 0;
    }

    if (*fig) {
      std::ofstream file;
      if (!fig_out.empty()) {
        fs::path p = fig_out;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        file.open(p);
        if (!file) throw std::runtime_error("cannot write " + fig_out);
      }
      std::ostream& out = fig_out.empty() ? std::cout : file;
      if (fig_kind == "hmm_means") {
        write_hmm_means_csv(out, fig_data.empty() ? default_hmm_data() : read_dataset_csv(fig_data));
        return 0;
      }
      const fs::path dir = fig_dir.empty() ? default_out() : fs::path(fig_dir);
      const auto runs = load_runs(dir);
      if (runs.empty()) throw std::invalid_argument("no run files in " + dir.string());
      if (fig_kind == "paths") {
        write_paths_csv(out, runs);
      } else {
        write_convergence_box_csv(out, runs);
      }
      return 0;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return 0;
}
