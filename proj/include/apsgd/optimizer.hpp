#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "apsgd/estimation.hpp"
#include "apsgd/preconditioner.hpp"
#include "apsgd/problems.hpp"
#include "apsgd/rng.hpp"

namespace apsgd {

enum class EtaSchedule { Constant, InvSqrt };  // InvSqrt: eta_t = eta / sqrt(t + 1), t from 0

std::string to_string(EtaSchedule s);
EtaSchedule parse_eta_schedule(const std::string& s);

struct HyperParams {
  double eta = 1e-3;
  double r = 1e-3;
  double beta = 0.99;
  double epsilon = 1e-8;
  long t_thresh = 1;
  long W = 0;
  long S = 1;
  double tau = 0.1;
  double delta_prob = 0.1;
  double omega = 5.0;
  double K_const = 0.125;

  PreconditionerVariant variant = PreconditionerVariant::FullMatrix;
  double exponent = -0.5;
  EtaSchedule eta_schedule = EtaSchedule::Constant;
  // When set, beta_t = 1 - C eta_t^{2/3} replaces the fixed beta.
  std::optional<double> beta_C;
  bool bias_corrected = false;

  PreconditionerKind kind() const { return {variant, epsilon, exponent}; }
  void validate() const;

  double eta_at(long t) const;
  double beta_at(long t) const;
};

enum class StepKind { Normal, Large, BurnIn, Hallucinated };
std::string to_string(StepKind k);
StepKind parse_step_kind(const std::string& s);

// seq increases by one per record. iter is 0 for the starting point, t + 1
// for the point after step t, -W..-1 for burn-in samples, and the iter of
// the preceding large step for hallucinated samples.
struct TrajectoryRecord {
  long seq = 0;
  long iter = 0;
  Vector x;
  double f = 0.0;
  double grad_norm = 0.0;
  std::optional<double> lambda_min_H;
  std::optional<double> est_error;    // ||A_hat - A(x)||
  std::optional<double> g_est_error;  // ||G_hat - G(x)||
  StepKind kind = StepKind::Normal;
};

using RecordSink = std::function<void(const TrajectoryRecord&)>;

enum class ASource { Idealized, Estimator };

struct RunOptions {
  std::optional<Vector> x0;  // zero vector when absent
  long log_every = 1;        // step records kept every k iterations (plus the last)
  bool log_aux = true;       // keep burn-in and hallucinated records
  long lambda_every = 0;     // lambda_min(H) every k iterations; 0 disables
  long est_error_every = 0;  // estimation error every k records; 0 disables
  RecordSink sink;           // when set, records stream here and are not stored
};

struct RunResult {
  std::vector<TrajectoryRecord> records;
  Vector x_final;
  double f_final = 0.0;
  std::optional<EmaEstimatorState> estimator;
  bool unstable_exponent = false;
};

RunResult run_preconditioned_sgd(const StochasticProblem& problem, ASource source, const HyperParams& hp, long T,
                                 Rng& rng, const RunOptions& opt = {});
RunResult run_rmsprop(const StochasticProblem& problem, const HyperParams& hp, long T, Rng& rng,
                      const RunOptions& opt = {});
RunResult run_rmsprop_with_burnin(const StochasticProblem& problem, const HyperParams& hp, long T, Rng& rng,
                                  const RunOptions& opt = {});
RunResult run_large_step_variant(const StochasticProblem& problem, ASource source, const HyperParams& hp, long T,
                                 Rng& rng, const RunOptions& opt = {});

struct FirstOrderInputs {
  double L = 0.0;
  double c3 = 0.0;
  double lambda_minus = 0.0;
  double f0_minus_fstar = 0.0;
};

struct FirstOrderParams {
  double eta = 0.0;
  long T = 0;
};

FirstOrderParams first_order_params(const FirstOrderInputs& in, double tau, bool exact);

struct SecondOrderParams {
  HyperParams hp;
  double gamma = 0.0;
  double f_thresh = 0.0;
  double g_thresh = 0.0;
  bool r_below_eta = false;
};

// M is taken from k.M_bound, else smooth.M_step. L and rho must be set.
SecondOrderParams second_order_params(const PreconditionerConstants& k, const ProblemSmoothness& smooth, double tau,
                                      double delta_prob, double omega = 5.0, double K_const = 0.125);

struct StationarityReport {
  double tau_g = 0.0;
  double tau_h = 0.0;
  bool is_stationary = false;
  double grad_norm = 0.0;
  double lambda_min_H = 0.0;
};

StationarityReport check_stationarity(const StochasticProblem& problem, const Vector& x, double tau_g, double tau_h);

// sqrt(rho tau)
double default_tau_h(double rho, double tau_g);

}  // namespace apsgd
