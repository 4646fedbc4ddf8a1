#include "apsgd/theory_checks.hpp"

#include <cmath>

#include "apsgd/error.hpp"

namespace apsgd {

namespace {

void check_beta_pos(double b, long t) {
  if (!(b > 0.0 && b < 1.0)) throw Error(ErrorKind::InvalidParam, "beta_pos must lie in (0, 1)");
  if (t < 1) throw Error(ErrorKind::InvalidParam, "t must be >= 1");
}

SymMatrix random_orthogonal_psd(const Vector& eigs, Rng& rng) {
  const int d = static_cast<int>(eigs.size());
  Matrix Z(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) Z(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(Z);
  const Matrix Q = qr.householderQ();
  return SymMatrix(Q * eigs.asDiagonal() * Q.transpose());
}

}  // namespace

std::vector<InequalityCase> series_bounds(double beta_pos, long t) {
  check_beta_pos(beta_pos, t);
  const double g = 1.0 + beta_pos;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (long i = 1; i <= t; ++i) {
    const double w = std::pow(g, static_cast<double>(t - i));
    const double di = static_cast<double>(i);
    s0 += w;
    s1 += w * di;
    s2 += w * di * di;
  }
  const double gt = std::pow(g, static_cast<double>(t));
  const std::map<std::string, double> in{{"beta_pos", beta_pos}, {"t", static_cast<double>(t)}};
  return {
      {"series_0", s0, 2.0 / beta_pos * gt, in},
      {"series_1", s1, 2.0 / (beta_pos * beta_pos) * gt, in},
      {"series_2", s2, 6.0 / (beta_pos * beta_pos * beta_pos) * gt, in},
  };
}

double compensated_series_sum(double beta_pos, long t, int power) {
  check_beta_pos(beta_pos, t);
  if (power < 0 || power > 2) throw Error(ErrorKind::InvalidParam, "power must be 0, 1 or 2");
  const double g = 1.0 + beta_pos;
  double sum = 0.0, c = 0.0;
  for (long i = t; i >= 1; --i) {
    const double term = std::pow(g, static_cast<double>(t - i)) * std::pow(static_cast<double>(i), power);
    const double y = term - c;
    const double s = sum + y;
    c = (s - sum) - y;
    sum = s;
  }
  return sum;
}

InequalityCase quadratic_sqrt_bound(double A, double B, double C, double z) {
  if (!(A > 0.0)) throw Error(ErrorKind::InvalidParam, "A must be > 0");
  if (B < 0 || C < 0 || z < 0) throw Error(ErrorKind::InvalidParam, "B, C, z must be >= 0");
  const double lhs = std::sqrt(A * z * z + B * z + C);
  const double rhs = std::sqrt(A) * (2.0 * z + B / (2.0 * A) + std::sqrt(C / A));
  return {"quadratic_sqrt", lhs, rhs, {{"A", A}, {"B", B}, {"C", C}, {"z", z}}};
}

InequalityCase exp_growth_bound(double x, double C_target) {
  if (!(x > 0.0 && x < 1.0)) throw Error(ErrorKind::InvalidParam, "x must lie in (0, 1)");
  if (!(C_target > 1.0)) throw Error(ErrorKind::InvalidParam, "C must be > 1");
  const double t = std::ceil(2.0 * std::log(C_target) / x);
  return {"exp_growth", C_target, std::pow(1.0 + x, t), {{"x", x}, {"C", C_target}, {"t", t}}};
}

NoiseAmplificationSetup random_noise_amplification_setup(int d, Rng& rng) {
  if (d < 1) throw Error(ErrorKind::InvalidParam, "d must be >= 1");
  const double lambda_minus = 0.2 + rng.uniform();
  Vector eigs(d);
  for (int i = 0; i < d; ++i) eigs(i) = lambda_minus * (1.0 + 3.0 * rng.uniform());
  eigs(0) = lambda_minus;
  SymMatrix A = random_orthogonal_psd(eigs, rng);

  Matrix E(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) E(i, j) = rng.normal();
  SymMatrix Es(E);
  const double n = op_norm(Es);
  const double mu = rng.uniform() * 0.5 * lambda_minus;
  SymMatrix A_hat = n > 0 ? A + Es * (mu / n) : A;

  Vector mean = rng.normal_vector(d) * rng.uniform();
  Vector ceigs(d);
  for (int i = 0; i < d; ++i) ceigs(i) = 0.1 + rng.uniform();
  return {A, A_hat, mean, random_orthogonal_psd(ceigs, rng)};
}

InequalityCase inexact_noise_amplification(const NoiseAmplificationSetup& s, double c3, int n_samples, Rng& rng) {
  if (!(c3 > 0.0) || n_samples < 2) throw Error(ErrorKind::InvalidParam, "need c3 > 0 and >= 2 samples");
  const int d = s.A.dim();
  if (s.A_hat.dim() != d || s.mean.size() != d || s.cov.dim() != d) {
    throw Error(ErrorKind::DimMismatch, "noise amplification setup dimensions differ");
  }
  const double lm = s.A.lambda_min();
  if (!(lm > 0.0) || !(op_norm(s.A_hat - s.A) < lm / 2.0 + 1e-15)) {
    throw Error(ErrorKind::InvalidParam, "need A positive definite and ||A_hat - A|| < lambda_min(A)/2");
  }
  const SymMatrix root = sym_power(s.cov, 0.5, 0.0);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vector g = s.mean + root * rng.normal_vector(d);
    const double v = (s.A_hat * g).squaredNorm();
    sum += v;
    sum2 += v * v;
  }
  const double n = n_samples;
  const double mean = sum / n;
  const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / (n - 1.0));
  return {"inexact_noise_amplification", mean, 2.25 * c3 + 4.0 * se, {{"c3", c3}, {"se", se}}};
}

InequalityCase negative_eigenvalue_bound(const SymMatrix& A, const SymMatrix& H) {
  if (A.dim() != H.dim()) throw Error(ErrorKind::DimMismatch, "A and H dimensions differ");
  const double la = A.lambda_min();
  const double lh = H.lambda_min();
  if (!(la > 0.0)) throw Error(ErrorKind::InvalidParam, "A must be positive definite");
  if (!(lh < 0.0)) throw Error(ErrorKind::InvalidParam, "H needs a negative eigenvalue");
  const SymMatrix r = sym_power(A, 0.5, 0.0);
  const SymMatrix M(r.matrix() * H.matrix() * r.matrix());
  const double lm = M.lambda_min();
  return {"negative_eigenvalue", la * std::abs(lh), lm < 0 ? std::abs(lm) : 0.0,
          {{"lambda_min_A", la}, {"lambda_min_H", lh}}};
}

double isotropy_covariance_check(const StochasticProblem& problem, const Vector& x, int n_samples, Rng& rng) {
  if (n_samples < 2) throw Error(ErrorKind::InvalidParam, "need >= 2 samples");
  auto G = problem.exact_G(x);
  if (!G) throw Error(ErrorKind::MissingOracle, problem.name() + " has no exact second moment");
  const int d = problem.dim();
  const double scale = std::max(1.0, op_norm(*G));
  if (!(G->lambda_min() > 1e-12 * scale)) throw Error(ErrorKind::SingularMatrix, "exact G is singular");
  const SymMatrix R = sym_power(*G, -0.5, 0.0);
  const Vector m = problem.grad(x);

  Vector sum = Vector::Zero(d);
  Matrix outer = Matrix::Zero(d, d);
  for (int i = 0; i < n_samples; ++i) {
    const Vector xi = R * (problem.sample_grad(x, rng) - m);
    sum += xi;
    outer.noalias() += xi * xi.transpose();
  }
  const double n = n_samples;
  const Vector mean = sum / n;
  const Matrix cov = (outer - n * mean * mean.transpose()) / (n - 1.0);
  const Vector u = R * m;
  const Matrix expected = Matrix::Identity(d, d) - u * u.transpose();
  return (cov - expected).cwiseAbs().maxCoeff();
}

InequalityCase descent_lemma_check(const StochasticProblem& problem, const SymMatrix& A, const SymMatrix& A_hat,
                                   const Vector& x0, double eta, double L, double c3, double lambda_minus,
                                   int n_samples, Rng& rng) {
  if (n_samples < 2 || !(eta > 0) || !(L > 0) || !(c3 > 0) || !(lambda_minus > 0)) {
    throw Error(ErrorKind::InvalidParam, "descent check needs positive eta, L, c3, lambda_- and >= 2 samples");
  }
  if (!(op_norm(A_hat - A) < lambda_minus / 2.0)) {
    throw Error(ErrorKind::InvalidParam, "need ||A_hat - A|| < lambda_- / 2");
  }
  const double f0 = problem.eval_f(x0);
  const double gn2 = problem.grad(x0).squaredNorm();
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Vector x1 = x0 - eta * (A_hat * problem.sample_grad(x0, rng));
    const double v = problem.eval_f(x1) - f0;
    sum += v;
    sum2 += v * v;
  }
  const double n = n_samples;
  const double mean = sum / n;
  const double se = std::sqrt(std::max(0.0, sum2 / n - mean * mean) / (n - 1.0));
  const double rhs = -(eta * lambda_minus / 2.0) * gn2 + 9.0 * eta * eta * L * c3 / 8.0 + 4.0 * se;
  return {"descent_lemma", mean, rhs, {{"eta", eta}, {"grad_norm_sq", gn2}, {"se", se}}};
}

}  // namespace apsgd
