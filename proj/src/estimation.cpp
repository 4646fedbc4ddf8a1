#include "apsgd/estimation.hpp"

#include <cmath>

#include "apsgd/error.hpp"

namespace apsgd {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorKind::InvalidParam, "beta must lie in (0, 1)");
}

}  // namespace

double EmaWeighting::norm_squared() const {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return s;
}

EmaWeighting make_ema_weights(double beta, long T) {
  check_beta(beta);
  if (T < 1) throw Error(ErrorKind::InvalidParam, "T must be >= 1");
  EmaWeighting out{beta, T, std::vector<double>(static_cast<std::size_t>(T))};
  // w_t = (1 - beta) beta^{T-t} / (1 - beta^T)
  const double norm = (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(T)));
  double p = 1.0;
  for (long t = T - 1; t >= 0; --t) {
    out.weights[static_cast<std::size_t>(t)] = norm * p;
    p *= beta;
  }
  return out;
}

double ema_weight_norm_bound(double beta, long T) {
  check_beta(beta);
  if (T < 1) throw Error(ErrorKind::InvalidParam, "T must be >= 1");
  return 2.0 * (1.0 - beta) / (1.0 - std::pow(beta, static_cast<double>(T)));
}

double beta_schedule(double eta, double C) {
  if (!(eta > 0.0) || !(C > 0.0)) throw Error(ErrorKind::InvalidParam, "beta_schedule needs eta > 0 and C > 0");
  const double k = C * std::cbrt(eta * eta);
  if (!(k < 1.0)) throw Error(ErrorKind::InvalidParam, "C eta^{2/3} must be < 1");
  return 1.0 - k;
}

long burn_in_length(double eta, double c_w) {
  if (!(eta > 0.0) || !(c_w > 0.0)) throw Error(ErrorKind::InvalidParam, "burn_in_length needs eta > 0 and c_w > 0");
  const double w = c_w / std::cbrt(eta * eta);
  // Guard against 99.99999 from cbrt rounding becoming 100 -> 100, not 101.
  const double r = std::round(w);
  if (std::abs(w - r) < 1e-9 * std::max(1.0, r)) return std::max(1L, static_cast<long>(r));
  return std::max(1L, static_cast<long>(std::ceil(w)));
}

EstimationBoundTerms estimation_error_terms(const EstimationBoundInputs& in) {
  check_beta(in.beta);
  if (in.sigma_max < 0 || in.M_step < 0 || in.L_G < 0 || in.eta < 0 || in.R < 0) {
    throw Error(ErrorKind::InvalidParam, "bound inputs must be nonnegative");
  }
  if (in.d < 1 || !(in.delta_prob > 0.0 && in.delta_prob < 1.0)) {
    throw Error(ErrorKind::InvalidParam, "need d >= 1 and delta in (0, 1)");
  }
  const double gap = 1.0 - in.beta;
  if (!(static_cast<double>(in.T) > 4.0 / gap)) {
    throw Error(ErrorKind::PreconditionViolated, "T must exceed 4 / (1 - beta)");
  }
  EstimationBoundTerms t;
  t.variance = std::pow(2.0, 1.5) * in.sigma_max * std::sqrt(gap) * std::sqrt(std::log(in.d / in.delta_prob));
  t.bias = in.M_step * in.L_G * in.eta / gap;
  t.outer = 1.0 / (1.0 - std::pow(in.beta, static_cast<double>(in.T)));
  return t;
}

double estimation_error_bound(const EstimationBoundInputs& in) { return estimation_error_terms(in).total(); }

OptimizedBound optimize_estimation_bound(EstimationBoundInputs in) {
  // f(u) = a sqrt(u) + b / u with u = 1 - beta, minimized in log u by golden section.
  const double a = std::pow(2.0, 1.5) * in.sigma_max * std::sqrt(std::log(in.d / in.delta_prob));
  const double b = in.M_step * in.L_G * in.eta;
  auto f = [&](double lu) {
    const double u = std::exp(lu);
    return a * std::sqrt(u) + b / u;
  };
  double lo = std::log(1e-15), hi = std::log(1.0 - 1e-12);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - g * (hi - lo), d = lo + g * (hi - lo);
  for (int i = 0; i < 300; ++i) {
    if (f(c) < f(d)) {
      hi = d;
    } else {
      lo = c;
    }
    c = hi - g * (hi - lo);
    d = lo + g * (hi - lo);
  }
  const double lu = 0.5 * (lo + hi);
  return OptimizedBound{1.0 - std::exp(lu), f(lu)};
}

void EstimabilityCert::validate() const {
  if (W < 1) throw Error(ErrorKind::InvalidParam, "W must be >= 1");
  if (T < 1) throw Error(ErrorKind::InvalidParam, "T must be >= 1");
  if (!(mu > 0.0)) throw Error(ErrorKind::InvalidParam, "mu must be > 0");
  if (!(delta_prob > 0.0 && delta_prob < 1.0)) throw Error(ErrorKind::InvalidParam, "delta must lie in (0, 1)");
}

EstimabilityCert certify_estimability(const EstimationBoundInputs& in, long W) {
  EstimabilityCert c{W, in.T, in.eta * in.M_step, estimation_error_bound(in), in.delta_prob};
  c.validate();
  return c;
}

EstimationErrorMeter::EstimationErrorMeter(ProblemPtr problem, PreconditionerKind kind)
    : problem_(std::move(problem)), kind_(kind) {
  if (!problem_) throw Error(ErrorKind::InvalidParam, "null problem");
  kind_.validate();
}

EstimationErrorSample EstimationErrorMeter::observe(const Vector& x, const EmaEstimatorState& state) {
  EstimationErrorSample s;
  if (kind_.variant != PreconditionerVariant::Identity) {
    auto G = problem_->exact_G(x);
    if (!G) throw Error(ErrorKind::MissingOracle, problem_->name() + " has no exact second moment");
    SymMatrix target = *G;
    if (kind_.variant == PreconditionerVariant::CovarianceFullMatrix) {
      const Vector m = problem_->grad(x);
      target = SymMatrix(target.matrix() - m * m.transpose());
    }
    s.g_error = op_norm(state.corrected() - target);
    s.a_error = op_norm(estimated_A(state, kind_) - precondition_from_moment(target, kind_));
  }
  sup_a_ = std::max(sup_a_, s.a_error);
  sup_g_ = std::max(sup_g_, s.g_error);
  series_.push_back(s);
  return s;
}

void EstimationErrorMeter::reset() {
  sup_a_ = sup_g_ = 0.0;
  series_.clear();
}

std::vector<EstimationErrorSample> measure_estimation_error(ProblemPtr problem, const PreconditionerKind& kind,
                                                            const std::vector<Vector>& xs,
                                                            const std::vector<EmaEstimatorState>& states) {
  if (xs.size() != states.size()) throw Error(ErrorKind::DimMismatch, "iterate and state counts differ");
  EstimationErrorMeter meter(std::move(problem), kind);
  for (std::size_t i = 0; i < xs.size(); ++i) meter.observe(xs[i], states[i]);
  return meter.series();
}

}  // namespace apsgd
