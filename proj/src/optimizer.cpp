#include "apsgd/optimizer.hpp"

#include <cmath>

#include "apsgd/error.hpp"

namespace apsgd {

std::string to_string(EtaSchedule s) { return s == EtaSchedule::Constant ? "constant" : "inv_sqrt"; }

EtaSchedule parse_eta_schedule(const std::string& s) {
  if (s == "constant") return EtaSchedule::Constant;
  if (s == "inv_sqrt") return EtaSchedule::InvSqrt;
  throw Error(ErrorKind::InvalidParam, "unknown eta schedule '" + s + "'");
}

std::string to_string(StepKind k) {
  switch (k) {
    case StepKind::Normal: return "normal";
    case StepKind::Large: return "large";
    case StepKind::BurnIn: return "burnin";
    case StepKind::Hallucinated: return "hallucinated";
  }
  return "?";
}

StepKind parse_step_kind(const std::string& s) {
  if (s == "normal") return StepKind::Normal;
  if (s == "large") return StepKind::Large;
  if (s == "burnin") return StepKind::BurnIn;
  if (s == "hallucinated") return StepKind::Hallucinated;
  throw Error(ErrorKind::DataFormatError, "unknown step kind '" + s + "'");
}

void HyperParams::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidParam, m); };
  if (!(eta >= 0.0) || !std::isfinite(eta)) bad("eta must be >= 0");
  if (!(r >= 0.0) || !std::isfinite(r)) bad("r must be >= 0");
  if (!(beta >= 0.0 && beta < 1.0)) bad("beta must lie in [0, 1)");
  if (t_thresh < 1) bad("t_thresh must be >= 1");
  if (W < 0) bad("W must be >= 0");
  if (S < 0) bad("S must be >= 0");
  if (!(K_const > 0.0 && K_const < 1.0)) bad("K must lie in (0, 1)");
  if (!(omega > 0.0)) bad("omega must be > 0");
  if (beta_C) beta_schedule(eta_at(0), *beta_C);
  kind().validate();
}

double HyperParams::eta_at(long t) const {
  if (eta_schedule == EtaSchedule::InvSqrt) return eta / std::sqrt(static_cast<double>(t) + 1.0);
  return eta;
}

double HyperParams::beta_at(long t) const { return beta_C ? beta_schedule(eta_at(t), *beta_C) : beta; }

namespace {

constexpr double kDivergenceLevel = 1e100;

struct EngineConfig {
  ASource source = ASource::Estimator;
  long W = 0;
  bool large_steps = false;
};

class Engine {
 public:
  Engine(const StochasticProblem& problem, const EngineConfig& cfg, const HyperParams& hp, Rng& rng,
         const RunOptions& opt)
      : p_(problem), cfg_(cfg), hp_(hp), kind_(hp.kind()), rng_(rng), opt_(opt) {
    hp_.validate();
    if (opt_.log_every < 1) throw Error(ErrorKind::InvalidParam, "log_every must be >= 1");
    if (opt_.lambda_every < 0 || opt_.est_error_every < 0) {
      throw Error(ErrorKind::InvalidParam, "logging periods must be >= 0");
    }
    if (cfg_.source == ASource::Idealized && kind_.variant != PreconditionerVariant::Identity &&
        !p_.exact_G(Vector::Zero(p_.dim()))) {
      throw Error(ErrorKind::MissingOracle, p_.name() + " has no exact second moment for the idealized preconditioner");
    }
    x_ = opt_.x0 ? *opt_.x0 : Vector::Zero(p_.dim());
    if (x_.size() != p_.dim()) throw Error(ErrorKind::DimMismatch, "x0 has the wrong dimension");
    project(x_);
    if (cfg_.source == ASource::Estimator) {
      state_ = EmaEstimatorState::zero(p_.dim(), hp_.beta_at(0), hp_.bias_corrected);
      if (opt_.est_error_every > 0 && p_.exact_G(x_)) meter_.emplace(share(problem), kind_);
    }
    result_.unstable_exponent = kind_.unstable_exponent();
  }

  RunResult run(long T) {
    if (T < 1) throw Error(ErrorKind::InvalidParam, "T must be >= 1");
    const double f0 = checked_f(x_);
    // Burn-in samples all sit at x0.
    for (long w = 0; w < cfg_.W; ++w) {
      state_->beta = hp_.beta_at(0);
      update_estimator(x_);
      if (opt_.log_aux) emit(-cfg_.W + w, x_, f0, StepKind::BurnIn, true);
    }
    emit(0, x_, f0, StepKind::Normal, true);

    for (long t = 0; t < T; ++t) {
      const bool large = cfg_.large_steps && t % hp_.t_thresh == 0;
      const double step = large ? hp_.r : hp_.eta_at(t);
      const double beta_t = hp_.beta_at(t);

      Vector g;
      SymMatrix A = SymMatrix::identity(p_.dim());
      if (cfg_.source == ASource::Estimator) {
        state_->beta = beta_t;
        g = update_estimator(x_);
        A = estimated_A(*state_, kind_);
      } else {
        g = p_.sample_grad(x_, rng_);
        A = idealized_A(p_, kind_, x_);
      }

      const Vector x_start = x_;
      Vector x_next = x_ - step * (A * g);
      project(x_next);
      const double f = checked_f(x_next);
      x_ = std::move(x_next);

      const long iter = t + 1;
      const bool keep = iter % opt_.log_every == 0 || iter == T || large;
      emit(iter, x_, f, large ? StepKind::Large : StepKind::Normal, keep);

      if (large && cfg_.source == ASource::Estimator) hallucinate(x_start, x_, iter);
      result_.f_final = f;
    }
    result_.x_final = x_;
    result_.estimator = state_;
    return std::move(result_);
  }

 private:
  static ProblemPtr share(const StochasticProblem& p) {
    // Non-owning handle for the meter; the problem outlives the engine.
    return ProblemPtr(&p, [](const StochasticProblem*) {});
  }

  void project(Vector& x) const {
    if (auto box = p_.domain()) x = x.cwiseMax(box->lo).cwiseMin(box->hi);
  }

  double checked_f(const Vector& x) const {
    if (!x.allFinite()) throw Error(ErrorKind::NonFinite, "iterate became non-finite");
    const double f = p_.eval_f(x);
    if (!std::isfinite(f) || std::abs(f) > kDivergenceLevel) {
      throw Error(ErrorKind::NonFinite, "objective diverged (|f| > 1e100)");
    }
    return f;
  }

  // Draws the sample(s) at x, folds them into the estimator and returns the
  // gradient used for stepping.
  Vector update_estimator(const Vector& x) {
    Vector g1 = p_.sample_grad(x, rng_);
    if (kind_.variant == PreconditionerVariant::CovarianceFullMatrix) {
      const Vector g2 = p_.sample_grad(x, rng_);
      state_ = ema_update(std::move(*state_), (g1 - g2) / std::sqrt(2.0));
    } else {
      state_ = ema_update(std::move(*state_), g1);
    }
    return g1;
  }

  void hallucinate(const Vector& from, const Vector& to, long iter) {
    const long S = hp_.S;
    for (long s = 0; s <= S; ++s) {
      const double frac = S == 0 ? 1.0 : static_cast<double>(s) / static_cast<double>(S);
      const Vector xs = from + frac * (to - from);
      update_estimator(xs);
      if (opt_.log_aux) emit(iter, xs, p_.eval_f(xs), StepKind::Hallucinated, true);
    }
  }

  void emit(long iter, const Vector& x, double f, StepKind kind, bool keep) {
    if (!keep) return;
    TrajectoryRecord rec;
    rec.seq = seq_++;
    rec.iter = iter;
    rec.x = x;
    rec.f = f;
    rec.grad_norm = p_.grad(x).norm();
    rec.kind = kind;
    const bool on_step = kind == StepKind::Normal || kind == StepKind::Large;
    if (opt_.lambda_every > 0 && on_step && iter % opt_.lambda_every == 0) {
      if (auto H = p_.hessian(x)) rec.lambda_min_H = H->lambda_min();
    }
    if (meter_ && (!on_step || iter % opt_.est_error_every == 0)) {
      const auto e = meter_->observe(x, *state_);
      rec.est_error = e.a_error;
      rec.g_est_error = e.g_error;
    }
    if (opt_.sink) {
      opt_.sink(rec);
    } else {
      result_.records.push_back(std::move(rec));
    }
  }

  const StochasticProblem& p_;
  EngineConfig cfg_;
  HyperParams hp_;
  PreconditionerKind kind_;
  Rng& rng_;
  const RunOptions& opt_;
  Vector x_;
  std::optional<EmaEstimatorState> state_;
  std::optional<EstimationErrorMeter> meter_;
  long seq_ = 0;
  RunResult result_;
};

}  // namespace

RunResult run_preconditioned_sgd(const StochasticProblem& problem, ASource source, const HyperParams& hp, long T,
                                 Rng& rng, const RunOptions& opt) {
  return Engine(problem, {source, 0, false}, hp, rng, opt).run(T);
}

RunResult run_rmsprop(const StochasticProblem& problem, const HyperParams& hp, long T, Rng& rng,
                      const RunOptions& opt) {
  return Engine(problem, {ASource::Estimator, 0, false}, hp, rng, opt).run(T);
}

RunResult run_rmsprop_with_burnin(const StochasticProblem& problem, const HyperParams& hp, long T, Rng& rng,
                                  const RunOptions& opt) {
  return Engine(problem, {ASource::Estimator, hp.W, false}, hp, rng, opt).run(T);
}

RunResult run_large_step_variant(const StochasticProblem& problem, ASource source, const HyperParams& hp, long T,
                                 Rng& rng, const RunOptions& opt) {
  if (hp.r < hp.eta) throw Error(ErrorKind::InvalidParam, "large-step mode needs r >= eta");
  if (source == ASource::Estimator && hp.S < 1) throw Error(ErrorKind::InvalidParam, "hallucination needs S >= 1");
  const long W = source == ASource::Estimator ? hp.W : 0;
  return Engine(problem, {source, W, true}, hp, rng, opt).run(T);
}

FirstOrderParams first_order_params(const FirstOrderInputs& in, double tau, bool exact) {
  if (!(in.L > 0 && in.c3 > 0 && in.lambda_minus > 0 && in.f0_minus_fstar > 0 && tau > 0)) {
    throw Error(ErrorKind::InvalidParam, "first_order_params needs positive inputs");
  }
  const double tau2 = tau * tau;
  const double base_T = in.f0_minus_fstar * in.L * in.c3 / (tau2 * tau2 * in.lambda_minus * in.lambda_minus);
  FirstOrderParams out;
  if (exact) {
    out.eta = tau2 * in.lambda_minus / (in.L * in.c3);
    out.T = static_cast<long>(std::ceil(2.0 * base_T));
  } else {
    out.eta = tau2 * in.lambda_minus / (4.0 * std::sqrt(2.0) * in.L * in.c3);
    out.T = static_cast<long>(std::ceil(32.0 * base_T));
  }
  return out;
}

SecondOrderParams second_order_params(const PreconditionerConstants& k, const ProblemSmoothness& smooth, double tau,
                                      double delta_prob, double omega, double K_const) {
  const double M = k.M_bound ? *k.M_bound : smooth.M_step.value_or(0.0);
  const double L = smooth.L.value_or(0.0);
  const double rho = smooth.rho.value_or(0.0);
  if (!(k.nu1 > 0 && k.nu2 > 0 && k.c3 > 0 && k.c4 > 0 && k.lambda_minus > 0 && M > 0 && L > 0 && rho > 0 &&
        tau > 0 && delta_prob > 0 && omega > 0 && K_const > 0 && K_const < 1)) {
    throw Error(ErrorKind::InvalidParam, "second_order_params needs positive constants, L, rho and M");
  }
  const double n1 = k.nu1, n2 = k.nu2, c3 = k.c3, c4 = k.c4, d = delta_prob, K = K_const;
  SecondOrderParams out;
  const double gamma = k.lambda_minus * std::sqrt(rho * tau);
  out.gamma = gamma;

  HyperParams& hp = out.hp;
  hp.tau = tau;
  hp.delta_prob = delta_prob;
  hp.omega = omega;
  hp.K_const = K_const;
  hp.r = gamma * gamma * d * c4 * K / (54.0 * n1 * n2 * c3 * L * rho * M);
  hp.eta = std::pow(gamma, 5) * d * d * c4 * c4 * K * K /
           (324.0 * M * M * L * L * n1 * n1 * n2 * n2 * c3 * c3 * rho * rho * omega);
  out.f_thresh = std::pow(gamma, 4) * d * c4 * c4 * K * K / (54.0 * 12.0 * n1 * n1 * n2 * n2 * c3 * L * rho * rho * M * M);
  hp.t_thresh = static_cast<long>(std::ceil(omega / (hp.eta * gamma)));
  out.g_thresh = out.f_thresh / static_cast<double>(hp.t_thresh);
  hp.W = burn_in_length(hp.eta, 1.0);
  hp.S = std::max(1L, static_cast<long>(std::ceil(hp.r / hp.eta)));
  out.r_below_eta = hp.r < hp.eta;
  return out;
}

StationarityReport check_stationarity(const StochasticProblem& problem, const Vector& x, double tau_g, double tau_h) {
  if (!(tau_g >= 0 && tau_h >= 0)) throw Error(ErrorKind::InvalidParam, "tolerances must be >= 0");
  auto H = problem.hessian(x);
  if (!H) throw Error(ErrorKind::MissingOracle, problem.name() + " has no Hessian");
  StationarityReport r;
  r.tau_g = tau_g;
  r.tau_h = tau_h;
  r.grad_norm = problem.grad(x).norm();
  r.lambda_min_H = H->lambda_min();
  r.is_stationary = r.grad_norm <= tau_g && r.lambda_min_H >= -tau_h;
  return r;
}

double default_tau_h(double rho, double tau_g) {
  if (!(rho >= 0 && tau_g >= 0)) throw Error(ErrorKind::InvalidParam, "rho and tau must be >= 0");
  return std::sqrt(rho * tau_g);
}

}  // namespace apsgd
