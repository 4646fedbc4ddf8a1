#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "apsgd/linalg.hpp"
#include "apsgd/rng.hpp"

namespace apsgd {

// Regularity constants of a problem. Absent values are unknown or unbounded.
struct ProblemSmoothness {
  std::optional<double> L;          // gradient Lipschitz
  std::optional<double> rho;        // Hessian Lipschitz
  std::optional<double> alpha;      // preconditioner Lipschitz
  std::optional<double> L_G;        // Lipschitz constant of x -> G(x)
  std::optional<double> sigma_max;  // sqrt of || E[(gg^T - G)^2] ||
  std::optional<double> R;          // || gg^T - G || bound
  std::optional<double> M_step;     // || A g || bound
};

// Axis-aligned feasible box; the optimizer projects onto it after each step.
struct Box {
  double lo;
  double hi;
};

class StochasticProblem {
 public:
  virtual ~StochasticProblem() = default;

  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double eval_f(const Vector& x) const = 0;
  virtual Vector grad(const Vector& x) const = 0;
  virtual Vector sample_grad(const Vector& x, Rng& rng) const = 0;

  // Exact second moment E[g g^T] at x, when it has a closed form.
  virtual std::optional<SymMatrix> exact_G(const Vector& /*x*/) const { return std::nullopt; }
  virtual std::optional<SymMatrix> hessian(const Vector& /*x*/) const { return std::nullopt; }
  virtual std::optional<Box> domain() const { return std::nullopt; }
  // sqrt(||E[(g g^T - G(x))^2]||), the conditional spread of one sample
  // around the second moment, when it has a closed form.
  virtual std::optional<double> conditional_sigma(const Vector& /*x*/) const { return std::nullopt; }
  virtual ProblemSmoothness smoothness() const { return {}; }
  // Global minimum value when known in closed form.
  virtual std::optional<double> f_star() const { return std::nullopt; }

 protected:
  void check_dim(const Vector& x) const;
};

using ProblemPtr = std::shared_ptr<const StochasticProblem>;

// f_i(x) = 1/2 x^T H x + b_i^T x + sum_j x_j^10 with H = diag(1, -0.1) and
// b uniform over {(+-1, +-0.1)}: mean 0, covariance diag(1, 0.01).
ProblemPtr make_saddle_problem();

// Value of the saddle objective at its local minima (0, +-0.01^{1/8}).
double saddle_local_min_value();

// Stochastic linear problem on [-1, 1]: gradient C with probability
// p = (1 + zeta)/(C + 1), otherwise -1, so F(x) = zeta x.
ProblemPtr make_counterexample(double C, double zeta);

// f(x) = 1/2 x^T H x with gradient noise N(0, noise_cov).
ProblemPtr make_quadratic_gaussian(const SymMatrix& H, const SymMatrix& noise_cov);

struct LabeledData {
  Matrix features;  // n x d
  Vector labels;    // n, values in {0, 1}
};

// Mean cross-entropy logistic regression; stochastic gradients use a uniform
// minibatch drawn without replacement.
ProblemPtr make_logistic_regression(LabeledData data, int batch);

// n Gaussian feature rows; labels from a random unit-norm teacher direction,
// each label flipped independently with probability flip_prob.
LabeledData make_separable_with_noise(int n, int d, double flip_prob, std::uint64_t seed);

// CSV: header row, feature columns, then a `label` column.
LabeledData load_labeled_csv(const std::filesystem::path& path);

// E[(g g^T - G)^2] for g ~ N(mean, cov), G = mean mean^T + cov.
SymMatrix gaussian_outer_variance(const Vector& mean, const SymMatrix& cov);

}  // namespace apsgd
