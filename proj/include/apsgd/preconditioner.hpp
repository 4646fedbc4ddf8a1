#pragma once

#include <optional>
#include <string>

#include "apsgd/linalg.hpp"
#include "apsgd/problems.hpp"

namespace apsgd {

enum class PreconditionerVariant { Identity, FullMatrix, Diagonal, CovarianceFullMatrix };

std::string to_string(PreconditionerVariant v);
PreconditionerVariant parse_preconditioner_variant(const std::string& s);

// A = (M + eps I)^exponent, where M is G, diag(G) or Cov(g) depending on the
// variant. Exponent -1 exists only to demonstrate instability.
struct PreconditionerKind {
  PreconditionerVariant variant = PreconditionerVariant::FullMatrix;
  double epsilon = 0.0;
  double exponent = -0.5;

  void validate() const;
  bool unstable_exponent() const { return exponent == -1.0; }
};

// Second-moment accumulator G_hat <- beta G_hat + (1 - beta) g g^T.
struct EmaEstimatorState {
  SymMatrix g_hat;
  double beta = 0.99;
  long steps_seen = 0;
  bool bias_corrected = false;
  // Product of the betas used so far; equals beta^steps_seen when beta is fixed.
  double beta_product = 1.0;

  static EmaEstimatorState zero(int dim, double beta, bool bias_corrected = false);

  // G_hat / (1 - prod beta) when bias correction is on, otherwise G_hat.
  SymMatrix corrected() const;
};

EmaEstimatorState ema_update(EmaEstimatorState state, const Vector& g);

// Ground-truth preconditioner built from the problem's exact second moment.
SymMatrix idealized_A(const StochasticProblem& problem, const PreconditionerKind& kind, const Vector& x);

// Same map applied to the running estimate.
SymMatrix estimated_A(const EmaEstimatorState& state, const PreconditionerKind& kind);

// Applies the kind's map to an arbitrary second-moment (or covariance) matrix.
SymMatrix precondition_from_moment(const SymMatrix& moment, const PreconditionerKind& kind);

// (nu1, nu2, c3, c4, lambda_minus, M) as in the preconditioner-constant
// definition. M is problem-specific and left empty by the calculators.
struct PreconditionerConstants {
  double nu1 = 0.0;
  double nu2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double lambda_minus = 0.0;
  std::optional<double> M_bound;
};

PreconditionerConstants constants_identity(const StochasticProblem& problem, const Vector& x);
PreconditionerConstants constants_full_matrix(const StochasticProblem& problem, const Vector& x, double eps);
PreconditionerConstants constants_diagonal(const StochasticProblem& problem, const Vector& x, double eps);

// Same calculators on an explicit second-moment matrix.
PreconditionerConstants constants_identity(const SymMatrix& G);
PreconditionerConstants constants_full_matrix(const SymMatrix& G, double eps);
PreconditionerConstants constants_diagonal(const SymMatrix& G, double eps);

// nu1^4 nu2^4 c3^4 / (lambda_-^10 c4^4)
double second_order_complexity_factor(const PreconditionerConstants& k);

// Monte-Carlo estimate of M: the largest ||A g|| over n draws at x.
double estimate_step_bound(const StochasticProblem& problem, const PreconditionerKind& kind,
                           const Vector& x, int n, Rng& rng);

}  // namespace apsgd
