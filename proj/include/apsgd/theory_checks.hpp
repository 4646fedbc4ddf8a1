#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "apsgd/linalg.hpp"
#include "apsgd/preconditioner.hpp"
#include "apsgd/problems.hpp"
#include "apsgd/rng.hpp"

namespace apsgd {

// lhs <= rhs is the claim. Monte-Carlo cases fold their slack into rhs.
struct InequalityCase {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  std::map<std::string, double> inputs;

  bool holds() const { return lhs <= rhs + 1e-12 * std::abs(rhs); }
};

// With growth factor (1 + b), 0 < b < 1:
//   sum_{i<=t} (1+b)^{t-i}      <= 2 b^-1 (1+b)^t
//   sum_{i<=t} (1+b)^{t-i} i    <= 2 b^-2 (1+b)^t
//   sum_{i<=t} (1+b)^{t-i} i^2  <= 6 b^-3 (1+b)^t
// The sums run over i = 1..t.
std::vector<InequalityCase> series_bounds(double beta_pos, long t);

// sqrt(A z^2 + B z + C) <= sqrt(A) (2 z + B / (2A) + sqrt(C / A))
InequalityCase quadratic_sqrt_bound(double A, double B, double C, double z);

// For t = ceil(2 ln(C) / x): C <= (1 + x)^t. Encoded as lhs = C, rhs = (1+x)^t.
InequalityCase exp_growth_bound(double x, double C_target);

// E||A_hat g||^2 <= 9/4 c3 with ||A_hat - A|| <= mu < lambda_-/2 and
// E||A g||^2 <= c3. Monte-Carlo estimate of the left side; rhs includes 4 SE.
struct NoiseAmplificationSetup {
  SymMatrix A;
  SymMatrix A_hat;
  Vector mean;
  SymMatrix cov;
};
InequalityCase inexact_noise_amplification(const NoiseAmplificationSetup& setup, double c3, int n_samples, Rng& rng);

// Random setup: PSD A with lambda_min = lambda_minus, a perturbation of norm
// mu in [0, lambda_-/2) and a Gaussian g.
NoiseAmplificationSetup random_noise_amplification_setup(int d, Rng& rng);

// lambda_min(A) |lambda_min(H)| <= |lambda_min(A^{1/2} H A^{1/2})|
InequalityCase negative_eigenvalue_bound(const SymMatrix& A, const SymMatrix& H);

// max_ij |Cov(G^{-1/2}(g - grad f)) - (I - G^{-1/2} grad grad^T G^{-1/2})|_ij
double isotropy_covariance_check(const StochasticProblem& problem, const Vector& x, int n_samples, Rng& rng);

// One-step descent: E f(x1) - f(x0) <= -(eta lambda_-/2) ||grad||^2 + 9 eta^2 L c3 / 8,
// for x1 = x0 - eta A_hat g with ||A_hat - A|| <= mu. Monte-Carlo lhs; rhs
// includes 4 SE.
InequalityCase descent_lemma_check(const StochasticProblem& problem, const SymMatrix& A, const SymMatrix& A_hat,
                                   const Vector& x0, double eta, double L, double c3, double lambda_minus,
                                   int n_samples, Rng& rng);

// Kahan-compensated version of the series sums (power 0, 1 or 2), for
// cross-checking series_bounds.
double compensated_series_sum(double beta_pos, long t, int power);

}  // namespace apsgd
