#pragma once

#include <optional>
#include <vector>

#include "apsgd/preconditioner.hpp"

namespace apsgd {

// Normalized weights w_t proportional to beta^{T-t}, t = 1..T.
struct EmaWeighting {
  double beta = 0.0;
  long T = 0;
  std::vector<double> weights;

  double norm_squared() const;
};

EmaWeighting make_ema_weights(double beta, long T);

// 2 (1 - beta) / (1 - beta^T)
double ema_weight_norm_bound(double beta, long T);

// 1 - C eta^{2/3}
double beta_schedule(double eta, double C);

// ceil(c_w eta^{-2/3})
long burn_in_length(double eta, double c_w);

struct EstimationBoundInputs {
  double sigma_max = 0.0;
  double R = 0.0;
  double M_step = 0.0;
  double L_G = 0.0;
  double eta = 0.0;
  double beta = 0.0;
  long T = 0;
  int d = 1;
  double delta_prob = 0.05;
};

struct EstimationBoundTerms {
  double variance = 0.0;  // 2^{3/2} sigma sqrt(1 - beta) sqrt(log(d / delta))
  double bias = 0.0;      // M L_G eta / (1 - beta)
  double outer = 1.0;     // 1 / (1 - beta^T)
  double total() const { return (variance + bias) * outer; }
};

EstimationBoundTerms estimation_error_terms(const EstimationBoundInputs& in);
double estimation_error_bound(const EstimationBoundInputs& in);

// Minimizes the bound over beta with T treated as infinite. Returns the
// minimizing beta and the bound value.
struct OptimizedBound {
  double beta = 0.0;
  double bound = 0.0;
};
OptimizedBound optimize_estimation_bound(EstimationBoundInputs in);

struct EstimabilityCert {
  long W = 1;
  long T = 1;
  double eta_eff = 0.0;
  double mu = 0.0;
  double delta_prob = 0.05;

  void validate() const;
};

// Certificate whose error level is the explicit bound for the given inputs.
EstimabilityCert certify_estimability(const EstimationBoundInputs& in, long W);

struct EstimationErrorSample {
  double a_error = 0.0;  // ||A_hat - A(x)||
  double g_error = 0.0;  // ||G_hat - G(x)||
};

// Tracks ||A_hat_t - A(x_t)|| and ||G_hat_t - G(x_t)|| along a run, with
// running suprema.
class EstimationErrorMeter {
 public:
  EstimationErrorMeter(ProblemPtr problem, PreconditionerKind kind);

  EstimationErrorSample observe(const Vector& x, const EmaEstimatorState& state);

  double sup_a_error() const { return sup_a_; }
  double sup_g_error() const { return sup_g_; }
  const std::vector<EstimationErrorSample>& series() const { return series_; }
  void reset();

 private:
  ProblemPtr problem_;
  PreconditionerKind kind_;
  double sup_a_ = 0.0;
  double sup_g_ = 0.0;
  std::vector<EstimationErrorSample> series_;
};

// Measures the estimation error over paired (iterate, estimator state)
// snapshots. Returns the per-step series; the running supremum is its
// prefix maximum.
std::vector<EstimationErrorSample> measure_estimation_error(ProblemPtr problem, const PreconditionerKind& kind,
                                                            const std::vector<Vector>& xs,
                                                            const std::vector<EmaEstimatorState>& states);

}  // namespace apsgd
