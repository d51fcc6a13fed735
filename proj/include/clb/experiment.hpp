#pragma once

// Experiment orchestration: config parsing and validation, multi-seed Monte
// Carlo execution, sweep grids, report / CSV emission and validation.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clb/bounds.hpp"
#include "clb/cl_train.hpp"
#include "clb/model.hpp"
#include "clb/tasks.hpp"

namespace clb {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

/// Invalid configuration; the message carries a line reference when known.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataCfg {
  std::string generator = "synthetic";  // synthetic or idx
  std::size_t tasks = 5;
  std::size_t n = 100;
  std::size_t dim = 2;
  double class_sep = 4.0;
  double rotation_per_task = 0.6;
  std::filesystem::path images, labels;
  std::size_t classes_per_task = 2;
  double delta = 0.0;
};

struct EstimationCfg {
  std::size_t runs = 256;
  std::size_t blocks = 16;
  BoundSearchCfg search = BoundSearchCfg::defaults();
};

struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 0;
  DataCfg data;
  BufferPlan buffer;
  ModelSpec model;
  OptimizerCfg optimizer;
  EstimationCfg estimation;
  std::filesystem::path output_dir = "clb_out";
  bool write_runs = true;

  /// Normalized form with every default filled in; the output section is
  /// excluded so that the hash identifies the experiment, not its location.
  nlohmann::ordered_json canonical() const;
  std::string hash() const;
};

/// Parses and validates. Unknown keys and constraint violations raise
/// ConfigError with the offending line of `text`.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Largest k <= T - 1 dividing m, with l = m / k.
std::pair<std::size_t, std::size_t> split_buffer_size(std::size_t m, std::size_t tasks);

/// One supersample block: the task sequence shared by the block's runs.
TaskSequence build_sequence(const ExperimentConfig& cfg, std::size_t block);

struct RunOutcome {
  std::vector<RunRecord> runs;      // successful runs, in run order
  std::vector<std::string> errors;  // "run i: message" for aborted runs
};

/// Executes every Monte-Carlo run. Parallel and serial execution give
/// identical records.
RunOutcome execute_runs(const ExperimentConfig& cfg, Execution exec = Execution::parallel);

struct RunResult {
  BoundReport report;
  nlohmann::ordered_json document;  // full report artifact
  std::size_t failed = 0;
};

RunResult run_experiment(const ExperimentConfig& cfg, Execution exec = Execution::parallel);

/// Worker count from CLB_WORKERS (unset: OpenMP default).
void apply_worker_env();

int cmd_run(const std::filesystem::path& config_path);

struct SweepCell {
  ExperimentConfig config;
  nlohmann::ordered_json axes;  // axis values of this cell
};

struct SweepSpec {
  nlohmann::ordered_json base;
  std::vector<std::pair<std::string, std::vector<nlohmann::ordered_json>>> axes;
  double xi_scale = 0.01;  // xi = sqrt(theta) * xi_scale
  std::filesystem::path csv = "sweep.csv";
  std::filesystem::path plot_csv = "sweep_plot.csv";
  std::filesystem::path reports_dir = "sweep_reports";
};

SweepSpec parse_sweep(const std::string& text);
std::vector<SweepCell> expand_sweep(const SweepSpec& spec);

inline constexpr const char* kSweepHeader = "config_hash,seed,T,n,m,k,l,eta,xi,delta,bound,value,se,gap,gap_se";

/// Long-form rows for one finished cell.
std::vector<std::string> sweep_rows(const ExperimentConfig& cfg, const BoundReport& report);

/// Rewrites `path` keeping rows whose hash is not in `rows`, then appends
/// `rows`.
void merge_csv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows);

int cmd_sweep(const std::filesystem::path& sweep_path);

/// Random-label memorizer: labels are fair coins independent of features, the
/// learner stores its training samples and predicts class 0 on anything
/// unseen. Training loss is 0 and every test loss is a fair coin.
std::vector<RunRecord> memorizer_runs(std::size_t runs, std::size_t tasks, std::size_t n, std::size_t k,
                                      std::size_t l, std::uint64_t seed);

struct ValidateOptions {
  std::string section;  // empty: all
  std::string inject_fault;
  std::filesystem::path report = "validation_report.json";
};

int cmd_validate(const ValidateOptions& opts);

}  // namespace clb
