#pragma once

#include "avilab/config.hpp"
#include "avilab/dataset.hpp"
#include "avilab/model.hpp"
#include "avilab/optimizer.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace avilab {

/// Arm name used to group runs: "fvi", "constant", or the architecture
/// with the window appended when it exceeds 1 ("mlp(4x4,relu)/w2").
std::string arm_label(const std::string& capacity, int window);

/// A run as stored on disk.
struct RunFile {
  std::string model;
  std::string algo;
  std::string capacity;
  int window = 1;
  int n = 0;
  std::uint64_t seed = 0;
  std::optional<int> converged_at;
  double final_elbo = 0.0;
  std::string error;
  std::vector<StepRecord> steps;
  std::filesystem::path path;

  std::string arm() const { return arm_label(capacity, window); }
  /// Wall time at the convergence step, when converged.
  std::optional<double> wall_ms_to_converge() const;
};

RunFile to_run_file(const RunRecord& record, int window, int n);

/// Provenance header lines, then columns model,algo,seed,step,wall_time_ms,elbo.
void write_run_csv(std::ostream& out, const RunFile& run);
void write_run_csv(const std::filesystem::path& path, const RunFile& run);
RunFile read_run_csv(const std::filesystem::path& path);

/// "<model>_<arm>_seed<k>", filesystem-safe.
std::string run_stem(const RunFile& run);

/// Model built from the config (name, overrides, window).
std::shared_ptr<const Model> build_model(const ExperimentConfig& cfg);

/// The configured dataset: read from data_path or simulated from data_seed.
Dataset build_dataset(const ExperimentConfig& cfg, const Model& model);

/// One fit per seed; seeds run on worker threads, results in seed order.
std::vector<RunRecord> run_seeds(const Model& model, const Dataset& data, const ExperimentConfig& cfg,
                                 unsigned threads = 0);

/// Writes one run CSV and one checkpoint per record, plus runs_summary.csv
/// (one line per run, with an error column). Returns the run file paths.
std::vector<std::filesystem::path> write_fit_outputs(const std::vector<RunRecord>& records,
                                                     const Model& model, const Dataset& data,
                                                     const std::filesystem::path& out_dir);

/// ELBO of the exact factorized optimum under the fixed evaluation block,
/// for models with a closed form (linear, saw, HMM with theta fixed).
std::optional<double> oracle_elbo(const Model& model, const Dataset& data,
                                  const OptimizerConfig& cfg);

/// Median, and standard error std/sqrt(k) across seeds.
struct SeedSummary {
  double median = 0.0;
  double std_error = 0.0;
  int count = 0;
};
SeedSummary summarize(const std::vector<double>& values);

/// Minimum distinguishable ELBO difference: 3 pooled standard errors, at least 0.5.
double mc_tolerance(double se_a, double se_b);

struct ArmReport {
  std::string algo;
  std::string arm;
  SeedSummary final_elbo;
  /// Median F-VI minus median of this arm.
  double deficit = 0.0;
  double tolerance = 0.0;
  /// "closed" or "open"; "reference" for the F-VI arm itself.
  std::string verdict;
  /// Median no higher than F-VI's plus the tolerance.
  bool ordering_ok = true;
  int converged = 0;
  int errors = 0;
  std::optional<double> median_steps_to_converge;
  std::optional<double> median_wall_ms_to_converge;
};

struct GapReport {
  std::string model;
  int n = 0;
  std::optional<double> oracle_elbo;
  std::vector<ArmReport> arms;
  std::vector<RunFile> runs;

  const ArmReport* find(const std::string& arm) const;
};

/// Needs at least one F-VI run and one other run, all on the same model and N.
GapReport gap_report(const std::vector<RunFile>& runs, std::optional<double> oracle = {});
void write_gap_report(const std::filesystem::path& path, const GapReport& report);
/// Per-seed rows: arm, seed, final_elbo, converged_at, wall_ms_to_converge, error.
void write_gap_seeds(const std::filesystem::path& path, const GapReport& report);

/// Figure data.
void write_paths_csv(std::ostream& out, const std::vector<RunFile>& runs);
void write_convergence_box_csv(std::ostream& out, const std::vector<RunFile>& runs);
/// HMM optimal factor means and variances for x (default: N=100 ones), for
/// both the anchored and the flat first-state prior.
void write_hmm_means_csv(std::ostream& out, const Dataset& data);

/// Every *.csv run file directly inside dir (checkpoints and reports skipped).
std::vector<RunFile> load_runs(const std::filesystem::path& dir);

}  // namespace avilab
