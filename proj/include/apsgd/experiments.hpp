#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "apsgd/optimizer.hpp"

namespace apsgd {

// Flat "section.key" -> value view of an INI config. Sweeps override
// entries here and re-resolve.
using RawConfig = std::map<std::string, std::string>;

RawConfig load_raw_config(const std::filesystem::path& path);
RawConfig parse_raw_config(const std::string& text);

enum class Algorithm { Sgd, RmsProp, RmsPropBurnIn, LargeStep };
std::string to_string(Algorithm a);

struct ExperimentConfig {
  RawConfig raw;

  std::string problem_name;
  ProblemPtr problem;

  Algorithm algorithm = Algorithm::RmsProp;
  ASource source = ASource::Estimator;
  HyperParams hp;

  std::string run_id = "run";
  std::vector<std::uint64_t> seeds;
  long T = 1;
  long log_every = 1;
  long lambda_every = 0;
  long est_error_every = 0;
  std::optional<Vector> x0;
  double escape_level = -0.1;
  std::optional<double> f_threshold;

  // [estimation]
  std::vector<double> est_etas;
  double est_C = 1.0;
  double est_c_w = 4.0;
  double est_T_factor = 20.0;
  double est_delta = 0.05;

  Vector start() const { return x0 ? *x0 : Vector::Zero(problem->dim()); }
};

// Validates every key and builds the problem. Throws Error(ConfigError)
// naming the offending field.
ExperimentConfig resolve_config(const RawConfig& raw);

// Identity-preconditioner constants for the first-order calculator at x0:
// c3 = tr Cov(g) + 2 L (f(x0) - f*), which bounds E||g||^2 on the sublevel
// set of x0 when the noise covariance does not depend on x.
FirstOrderInputs first_order_inputs(const StochasticProblem& problem, const Vector& x0);

// Runs the configured algorithm once.
RunResult execute(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt);

struct RunSummary {
  std::string run_id;
  std::string condition;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double final_f = 0.0;
  double min_f = 0.0;
  std::optional<long> iters_to_threshold;
  std::optional<long> escape_time;
  std::optional<double> mean_last_1000_f;
  std::optional<double> sup_est_error;
  std::string trajectory_file;
};

// Builds a RunSummary from step records (normal and large) as they arrive.
class Summarizer {
 public:
  Summarizer(long T, double escape_level, std::optional<double> f_threshold);
  void add(const TrajectoryRecord& rec);
  RunSummary finish() const;

 private:
  long T_;
  double escape_level_;
  std::optional<double> f_threshold_;
  bool any_ = false;
  double final_f_ = 0.0;
  double min_f_ = 0.0;
  std::optional<long> hit_threshold_;
  std::optional<long> escape_;
  double tail_sum_ = 0.0;
  long tail_n_ = 0;
  std::optional<double> sup_err_;
};

// Shortest round-trip, locale-independent.
std::string format_double(double v);

std::vector<std::string> trajectory_header(int dim);
std::string trajectory_row(const TrajectoryRecord& rec, bool with_x);
std::vector<TrajectoryRecord> read_trajectory_csv(const std::filesystem::path& path);

std::vector<std::string> summary_header();
std::string summary_row(const RunSummary& s);
std::vector<RunSummary> read_summary_csv(const std::filesystem::path& path);

// Runs one seed, streaming the trajectory to `traj_path` (temp file, then
// rename). A numeric failure (divergence or a singular preconditioner) keeps
// the partial trajectory and marks the summary status "diverged".
RunSummary run_to_file(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& traj_path);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct CliContext {
  std::filesystem::path out_dir = "out";
  int jobs = 1;
  std::uint64_t seed_offset = 0;
};

using SweepAxis = std::pair<std::string, std::vector<std::string>>;

int cmd_run(const std::filesystem::path& config, const CliContext& ctx, std::ostream& log);
int cmd_sweep(const std::filesystem::path& config, std::vector<SweepAxis> axes, const CliContext& ctx,
              std::ostream& log);
int cmd_estimation_scaling(const std::filesystem::path& config, const CliContext& ctx, std::ostream& log);
int cmd_report(const std::vector<std::filesystem::path>& summaries, const CliContext& ctx, std::ostream& log);

struct EstimationScalingRow {
  double eta = 0.0;
  double beta = 0.0;
  long W = 0;
  long T = 0;
  double sup_g_error = 0.0;
  double sup_a_error = 0.0;
  double sigma_max = 0.0;
  double M = 0.0;
  double L_G = 0.0;
  double bound = 0.0;
};

struct EstimationScalingResult {
  std::vector<EstimationScalingRow> rows;
  double slope_g = 0.0;  // log-log slope of sup ||G_hat - G|| against eta; NaN if an error is 0
  double slope_a = 0.0;  // same for sup ||A_hat - A||
};

// For each eta in cfg.est_etas: beta = 1 - C eta^{2/3}, burn-in
// W = burn_in_length(eta, c_w), T = ceil(T_factor / (1 - beta)) steps of
// RMSProp from x0. Errors are measured on every step after burn-in.
EstimationScalingResult estimation_scaling(const ExperimentConfig& cfg, std::uint64_t seed);

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Linear-interpolated quantile of unsorted values.
double quantile(std::vector<double> v, double q);

// Maps library errors onto CLI exit codes (2 config, 3 numeric).
int exit_code_for(const std::exception& e);

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace apsgd
