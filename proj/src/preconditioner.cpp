#include "apsgd/preconditioner.hpp"

#include <cmath>

#include "apsgd/error.hpp"

namespace apsgd {

std::string to_string(PreconditionerVariant v) {
  switch (v) {
    case PreconditionerVariant::Identity: return "identity";
    case PreconditionerVariant::FullMatrix: return "full";
    case PreconditionerVariant::Diagonal: return "diagonal";
    case PreconditionerVariant::CovarianceFullMatrix: return "covariance";
  }
  return "?";
}

PreconditionerVariant parse_preconditioner_variant(const std::string& s) {
  if (s == "identity") return PreconditionerVariant::Identity;
  if (s == "full") return PreconditionerVariant::FullMatrix;
  if (s == "diagonal") return PreconditionerVariant::Diagonal;
  if (s == "covariance") return PreconditionerVariant::CovarianceFullMatrix;
  throw Error(ErrorKind::InvalidParam, "unknown preconditioner '" + s + "'");
}

void PreconditionerKind::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::InvalidParam, "epsilon must be >= 0");
  if (exponent != -0.5 && exponent != -1.0) {
    throw Error(ErrorKind::InvalidParam, "exponent must be -1/2 or -1");
  }
}

EmaEstimatorState EmaEstimatorState::zero(int dim, double beta, bool bias_corrected) {
  if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidParam, "beta must lie in [0, 1)");
  return EmaEstimatorState{SymMatrix::zero(dim), beta, 0, bias_corrected, 1.0};
}

SymMatrix EmaEstimatorState::corrected() const {
  if (!bias_corrected || steps_seen == 0) return g_hat;
  return g_hat * (1.0 / (1.0 - beta_product));
}

EmaEstimatorState ema_update(EmaEstimatorState state, const Vector& g) {
  if (g.size() != state.g_hat.dim()) {
    throw Error(ErrorKind::DimMismatch, "ema_update: gradient has dimension " + std::to_string(g.size()) +
                                            ", estimator " + std::to_string(state.g_hat.dim()));
  }
  if (!g.allFinite()) throw Error(ErrorKind::NonFinite, "ema_update: non-finite gradient");
  const double b = state.beta;
  state.g_hat = SymMatrix(b * state.g_hat.matrix() + (1.0 - b) * (g * g.transpose()));
  state.beta_product *= b;
  ++state.steps_seen;
  return state;
}

SymMatrix precondition_from_moment(const SymMatrix& moment, const PreconditionerKind& kind) {
  kind.validate();
  switch (kind.variant) {
    case PreconditionerVariant::Identity:
      return SymMatrix::identity(moment.dim());
    case PreconditionerVariant::Diagonal: {
      Vector d = moment.diag().array() + kind.epsilon;
      if (d.minCoeff() <= 0.0) throw Error(ErrorKind::SingularMatrix, "diagonal preconditioner has a zero entry");
      return SymMatrix::diagonal(d.array().pow(kind.exponent).matrix());
    }
    case PreconditionerVariant::FullMatrix:
    case PreconditionerVariant::CovarianceFullMatrix:
      return sym_power(moment.add_identity(kind.epsilon), kind.exponent, 0.0);
  }
  throw Error(ErrorKind::InvalidParam, "unknown preconditioner variant");
}

namespace {

SymMatrix require_G(const StochasticProblem& problem, const Vector& x) {
  auto G = problem.exact_G(x);
  if (!G) throw Error(ErrorKind::MissingOracle, problem.name() + " has no exact second moment");
  return *G;
}

}  // namespace

SymMatrix idealized_A(const StochasticProblem& problem, const PreconditionerKind& kind, const Vector& x) {
  kind.validate();
  if (kind.variant == PreconditionerVariant::Identity) return SymMatrix::identity(problem.dim());
  SymMatrix G = require_G(problem, x);
  if (kind.variant == PreconditionerVariant::CovarianceFullMatrix) {
    const Vector m = problem.grad(x);
    G = SymMatrix(G.matrix() - m * m.transpose());
  }
  return precondition_from_moment(G, kind);
}

SymMatrix estimated_A(const EmaEstimatorState& state, const PreconditionerKind& kind) {
  return precondition_from_moment(state.corrected(), kind);
}

PreconditionerConstants constants_identity(const SymMatrix& G) {
  PreconditionerConstants k;
  k.nu1 = k.nu2 = 1.0;
  k.c3 = G.trace();
  k.c4 = G.lambda_min();
  k.lambda_minus = 1.0;
  return k;
}

PreconditionerConstants constants_full_matrix(const SymMatrix& G, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::InvalidParam, "eps must be >= 0");
  const double lmin = G.lambda_min();
  const double lmax = G.lambda_max();
  if (!(lmin + eps > 0.0)) throw Error(ErrorKind::SingularMatrix, "lambda_min(G) + eps must be > 0");
  PreconditionerConstants k;
  k.nu1 = k.nu2 = 1.0 / std::sqrt(lmin + eps);
  k.c3 = G.dim() * lmax / (eps + lmax);
  k.c4 = lmin / (lmin + eps);
  k.lambda_minus = 1.0 / std::sqrt(lmax + eps);
  return k;
}

PreconditionerConstants constants_diagonal(const SymMatrix& G, double eps) {
  if (!(eps >= 0.0)) throw Error(ErrorKind::InvalidParam, "eps must be >= 0");
  const Vector d = G.diag();
  const double dmin = d.minCoeff();
  const double dmax = d.maxCoeff();
  if (!(dmin > 0.0)) throw Error(ErrorKind::SingularMatrix, "diag(G) must be positive");
  // G diag(G)^{-1} is similar to diag(G)^{-1/2} G diag(G)^{-1/2}.
  const Vector s = d.array().rsqrt();
  const SymMatrix normalized(s.asDiagonal() * G.matrix() * s.asDiagonal());
  PreconditionerConstants k;
  k.nu1 = k.nu2 = 1.0 / std::sqrt(eps + dmin);
  k.c3 = G.dim() * dmax / (eps + dmax);
  k.c4 = normalized.lambda_min() * dmin / (eps + dmin);
  k.lambda_minus = 1.0 / std::sqrt(eps + dmax);
  return k;
}

PreconditionerConstants constants_identity(const StochasticProblem& problem, const Vector& x) {
  return constants_identity(require_G(problem, x));
}

PreconditionerConstants constants_full_matrix(const StochasticProblem& problem, const Vector& x, double eps) {
  return constants_full_matrix(require_G(problem, x), eps);
}

PreconditionerConstants constants_diagonal(const StochasticProblem& problem, const Vector& x, double eps) {
  return constants_diagonal(require_G(problem, x), eps);
}

double second_order_complexity_factor(const PreconditionerConstants& k) {
  if (!(k.nu1 > 0 && k.nu2 > 0 && k.c3 > 0 && k.c4 > 0 && k.lambda_minus > 0)) {
    throw Error(ErrorKind::InvalidParam, "complexity factor needs positive constants");
  }
  return std::pow(k.nu1, 4) * std::pow(k.nu2, 4) * std::pow(k.c3, 4) /
         (std::pow(k.lambda_minus, 10) * std::pow(k.c4, 4));
}

double estimate_step_bound(const StochasticProblem& problem, const PreconditionerKind& kind,
                           const Vector& x, int n, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::InvalidParam, "need at least one sample");
  const SymMatrix A = idealized_A(problem, kind, x);
  double best = 0.0;
  for (int i = 0; i < n; ++i) best = std::max(best, (A * problem.sample_grad(x, rng)).norm());
  return best;
}

}  // namespace apsgd
