#include <gtest/gtest.h>

#include <cmath>

#include "apsgd/error.hpp"
#include "apsgd/preconditioner.hpp"
#include "test_util.hpp"

using namespace apsgd;
using namespace apsgd::testing;

namespace {

SymMatrix diag(std::initializer_list<double> v) {
  Vector d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return SymMatrix::diagonal(d);
}

const PreconditionerKind kFull{PreconditionerVariant::FullMatrix, 0.0, -0.5};

}  // namespace

TEST(IdealizedA, IdentityKind) {
  auto p = make_saddle_problem();
  const PreconditionerKind k{PreconditionerVariant::Identity, 0.0, -0.5};
  EXPECT_LE(op_norm(idealized_A(*p, k, Vector::Constant(2, 0.4)) - SymMatrix::identity(2)), 0.0);
}

TEST(IdealizedA, CounterexampleScalar) {
  auto p = make_counterexample(2.0, 0.1);
  for (double v : {-1.0, 0.0, 0.5}) {
    EXPECT_NEAR(idealized_A(*p, kFull, Vector::Constant(1, v))(0, 0), 1.0 / std::sqrt(2.1), 1e-14);
  }
}

TEST(IdealizedA, SaddleAtOrigin) {
  auto p = make_saddle_problem();
  const SymMatrix A = idealized_A(*p, kFull, Vector::Zero(2));
  EXPECT_NEAR(A(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(A(1, 1), 10.0, 1e-10);
  EXPECT_NEAR(A(0, 1), 0.0, 1e-12);
}

TEST(IdealizedA, MissingOracle) {
  auto p = make_logistic_regression(make_separable_with_noise(20, 2, 0.1, 1), 5);
  try {
    idealized_A(*p, kFull, Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingOracle);
  }
}

TEST(IdealizedA, CovarianceVariantUsesCentredMoment) {
  Rng rng(1);
  auto p = make_quadratic_gaussian(SymMatrix::identity(2), diag({0.5, 2.0}));
  const Vector x = rng.normal_vector(2);
  const PreconditionerKind k{PreconditionerVariant::CovarianceFullMatrix, 0.0, -0.5};
  const SymMatrix A = idealized_A(*p, k, x);
  EXPECT_NEAR(A(0, 0), 1.0 / std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(A(1, 1), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Ema, SingleUpdate) {
  auto s = ema_update(EmaEstimatorState::zero(2, 0.9), Vector{{1.0, 0.0}});
  EXPECT_NEAR(s.g_hat(0, 0), 0.1, 1e-15);
  EXPECT_EQ(s.g_hat(1, 1), 0.0);
  EXPECT_EQ(s.steps_seen, 1);
}

TEST(Ema, RepeatedUpdatesClosedForm) {
  const Vector g{{0.3, -1.2, 2.0}};
  const double beta = 0.95;
  auto s = EmaEstimatorState::zero(3, beta);
  for (int t = 0; t < 40; ++t) s = ema_update(s, g);
  const Matrix want = (1 - std::pow(beta, 40)) * g * g.transpose();
  EXPECT_LE(op_norm(Matrix(s.g_hat.matrix() - want)), 1e-12);
  EXPECT_NEAR(s.beta_product, std::pow(beta, 40), 1e-15);
}

TEST(Ema, ZeroBetaHasNoMemory) {
  auto s = EmaEstimatorState::zero(2, 0.0);
  s = ema_update(s, Vector{{5.0, 1.0}});
  const Vector g{{1.0, 2.0}};
  s = ema_update(s, g);
  EXPECT_LE(op_norm(Matrix(s.g_hat.matrix() - g * g.transpose())), 0.0);
}

TEST(Ema, DimensionMismatch) {
  try {
    ema_update(EmaEstimatorState::zero(2, 0.9), Vector::Ones(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimMismatch);
  }
}

TEST(Ema, IsAValueUpdate) {
  const auto s0 = EmaEstimatorState::zero(2, 0.9);
  const auto s1 = ema_update(s0, Vector::Ones(2));
  EXPECT_EQ(s0.steps_seen, 0);
  EXPECT_EQ(s0.g_hat.matrix().norm(), 0.0);
  EXPECT_GT(s1.g_hat.matrix().norm(), 0.0);
}

TEST(Ema, BiasCorrectionRecoversConstantMoment) {
  const Vector g{{2.0, 1.0}};
  auto s = EmaEstimatorState::zero(2, 0.99, true);
  for (int t = 0; t < 5; ++t) s = ema_update(s, g);
  EXPECT_LE(op_norm(Matrix(s.corrected().matrix() - g * g.transpose())), 1e-12);
}

TEST(EstimatedA, Examples) {
  EmaEstimatorState s = EmaEstimatorState::zero(2, 0.9);
  s.g_hat = diag({3.0, 0.0});
  const SymMatrix A = estimated_A(s, {PreconditionerVariant::FullMatrix, 1.0, -0.5});
  EXPECT_NEAR(A(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(A(1, 1), 1.0, 1e-14);
  s.g_hat = SymMatrix::identity(2);
  EXPECT_LE(op_norm(estimated_A(s, kFull) - SymMatrix::identity(2)), 1e-14);
}

TEST(EstimatedA, SquaredTimesRegularizedMomentIsIdentity) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + trial % 6;
    EmaEstimatorState s = EmaEstimatorState::zero(d, 0.9);
    s.g_hat = random_psd(d, rng);
    const double eps = 0.01 + rng.uniform();
    const SymMatrix A = estimated_A(s, {PreconditionerVariant::FullMatrix, eps, -0.5});
    const Matrix prod = A.matrix() * A.matrix() * s.g_hat.add_identity(eps).matrix();
    EXPECT_LE(op_norm(Matrix(prod - Matrix::Identity(d, d))), 1e-8);
  }
}

TEST(EstimatedA, DiagonalUsesOnlyDiagonal) {
  EmaEstimatorState s = EmaEstimatorState::zero(2, 0.9);
  Matrix m(2, 2);
  m << 4, 1.5, 1.5, 9;
  s.g_hat = SymMatrix(m);
  const SymMatrix A = estimated_A(s, {PreconditionerVariant::Diagonal, 0.0, -0.5});
  EXPECT_NEAR(A(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(A(1, 1), 1.0 / 3.0, 1e-14);
  EXPECT_EQ(A(0, 1), 0.0);
}

TEST(Kind, Validation) {
  EXPECT_THROW((PreconditionerKind{PreconditionerVariant::FullMatrix, -1.0, -0.5}.validate()), Error);
  EXPECT_THROW((PreconditionerKind{PreconditionerVariant::FullMatrix, 0.0, -0.25}.validate()), Error);
  EXPECT_TRUE((PreconditionerKind{PreconditionerVariant::FullMatrix, 0.0, -1.0}.unstable_exponent()));
  EXPECT_EQ(parse_preconditioner_variant(to_string(PreconditionerVariant::Diagonal)), PreconditionerVariant::Diagonal);
  EXPECT_THROW(parse_preconditioner_variant("kfac"), Error);
}

TEST(Constants, Identity) {
  const auto k = constants_identity(diag({1.0, 0.01}));
  EXPECT_EQ(k.nu1, 1.0);
  EXPECT_EQ(k.nu2, 1.0);
  EXPECT_EQ(k.lambda_minus, 1.0);
  EXPECT_NEAR(k.c3, 1.01, 1e-15);
  EXPECT_NEAR(k.c4, 0.01, 1e-15);
  const auto k3 = constants_identity(SymMatrix::identity(3));
  EXPECT_NEAR(k3.c3, 3.0, 1e-15);
  EXPECT_NEAR(k3.c4, 1.0, 1e-15);
  auto p = make_saddle_problem();
  const auto kp = constants_identity(*p, Vector::Zero(2));
  EXPECT_NEAR(kp.c3, 1.01, 1e-14);
}

TEST(Constants, FullMatrix) {
  const auto k = constants_full_matrix(diag({1.0, 0.01}), 0.0);
  EXPECT_NEAR(k.nu1, 10.0, 1e-12);
  EXPECT_NEAR(k.nu2, 10.0, 1e-12);
  EXPECT_NEAR(k.c3, 2.0, 1e-15);
  EXPECT_NEAR(k.c4, 1.0, 1e-15);
  EXPECT_NEAR(k.lambda_minus, 1.0, 1e-15);
  const auto k4 = constants_full_matrix(SymMatrix::identity(4), 0.0);
  EXPECT_NEAR(k4.nu1, 1.0, 1e-15);
  EXPECT_NEAR(k4.c3, 4.0, 1e-15);
  EXPECT_NEAR(k4.c4, 1.0, 1e-15);
  EXPECT_NEAR(k4.lambda_minus, 1.0, 1e-15);
}

TEST(Constants, FullMatrixLargeEpsilonLimit) {
  const auto k = constants_full_matrix(diag({1.0, 0.01}), 1e12);
  EXPECT_LE(k.c3, 1e-6);
  EXPECT_LE(k.c4, 1e-6);
  EXPECT_LE(k.lambda_minus, 1e-6);
}

TEST(Constants, FullMatrixSingular) {
  try {
    constants_full_matrix(diag({1.0, 0.0}), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularMatrix);
  }
}

TEST(Constants, DiagonalMatchesFullForDiagonalG) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Vector d(4);
    for (int i = 0; i < 4; ++i) d(i) = 0.01 + rng.uniform();
    const double eps = trial % 2 ? 0.0 : rng.uniform();
    const auto a = constants_diagonal(SymMatrix::diagonal(d), eps);
    const auto b = constants_full_matrix(SymMatrix::diagonal(d), eps);
    EXPECT_NEAR(a.nu1, b.nu1, 1e-12 * b.nu1);
    EXPECT_NEAR(a.c3, b.c3, 1e-12 * b.c3);
    EXPECT_NEAR(a.c4, b.c4, 1e-12);
    EXPECT_NEAR(a.lambda_minus, b.lambda_minus, 1e-12);
  }
  const auto k = constants_diagonal(diag({1.0, 0.01}), 0.0);
  EXPECT_NEAR(k.nu1, 10.0, 1e-12);
  EXPECT_NEAR(k.c3, 2.0, 1e-15);
  EXPECT_NEAR(k.c4, 1.0, 1e-12);
}

TEST(Constants, DiagonalCoupledExample) {
  Matrix g(2, 2);
  g << 2, 1, 1, 2;
  // lambda_min([[1, .5], [.5, 1]]) = 0.5
  EXPECT_NEAR(constants_diagonal(SymMatrix(g), 0.0).c4, 0.5, 1e-14);
}

TEST(ComplexityFactor, Examples) {
  EXPECT_NEAR(second_order_complexity_factor(constants_identity(SymMatrix::identity(1))), 1.0, 1e-15);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 5;
    const SymMatrix G = random_psd(d, rng, 0.05);
    const double kappa = G.lambda_max() / G.lambda_min();
    const double want = std::pow(d, 4) * std::pow(kappa, 4) * G.lambda_max();
    EXPECT_NEAR(second_order_complexity_factor(constants_full_matrix(G, 0.0)), want, 1e-9 * want);
  }
  // lambda_max(G) <= 1: the RMSProp factor d^4 kappa^4 lambda_max sits below
  // SGD's worst-case bound d^4 kappa^4. SGD's exact factor (tr G / lambda_min)^4
  // is smaller still for this G, so only the bound comparison holds.
  const SymMatrix G = diag({0.5, 0.005});
  const double rms = second_order_complexity_factor(constants_full_matrix(G, 0.0));
  const double sgd = second_order_complexity_factor(constants_identity(G));
  const double sgd_bound = std::pow(2.0, 4) * std::pow(100.0, 4);
  EXPECT_LE(sgd, sgd_bound);
  EXPECT_LT(rms, sgd_bound);
  EXPECT_NEAR(rms, 8e8, 1e-3);
  EXPECT_NEAR(sgd, std::pow(0.505 / 0.005, 4), 1e-3);
  PreconditionerConstants bad;
  EXPECT_THROW(second_order_complexity_factor(bad), Error);
}

// The defining inequalities, checked for each calculator with its own
// preconditioner. nu1 is checked through ||A v||^2 <= nu1 ||A^{1/2} v||^2.
TEST(Constants, DefinitionalInequalitiesHold) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 6;
    const SymMatrix G = random_psd(d, rng, 0.01);
    const double eps = trial % 3 == 0 ? 0.0 : rng.uniform() * 0.5;
    const Vector v = rng.normal_vector(d);
    struct Case {
      PreconditionerConstants k;
      SymMatrix A;
    };
    const PreconditionerKind full{PreconditionerVariant::FullMatrix, eps, -0.5};
    const PreconditionerKind dg{PreconditionerVariant::Diagonal, eps, -0.5};
    const std::vector<Case> cases{
        {constants_identity(G), SymMatrix::identity(d)},
        {constants_full_matrix(G, eps), precondition_from_moment(G, full)},
        {constants_diagonal(G, eps), precondition_from_moment(G, dg)},
    };
    for (const auto& c : cases) {
      const SymMatrix root = sym_power(c.A, 0.5);
      EXPECT_LE((c.A * v).squaredNorm(), c.k.nu1 * (root * v).squaredNorm() * (1 + 1e-9));
      const SymMatrix AGA(c.A.matrix() * G.matrix() * c.A.matrix());
      EXPECT_GE(AGA.lambda_min(), c.k.c4 * (1 - 1e-9) - 1e-12);
      EXPECT_LE(AGA.trace(), c.k.c3 * (1 + 1e-9));
      EXPECT_GE(c.A.lambda_min(), c.k.lambda_minus * (1 - 1e-9));
    }
  }
}

TEST(StepBound, MonteCarloEstimate) {
  auto p = make_counterexample(10.0, 0.05);
  Rng rng(6);
  const double M = estimate_step_bound(*p, kFull, Vector::Zero(1), 500, rng);
  EXPECT_NEAR(M, 10.0 / std::sqrt(10.0 * 1.05 - 0.05), 1e-12);
}

TEST(CovarianceEstimator, HalvedDifferenceIsUnbiased) {
  Rng rng(7);
  const SymMatrix S = random_psd(3, rng, 0.1);
  auto p = make_quadratic_gaussian(SymMatrix::identity(3), S);
  const Vector x = rng.normal_vector(3);
  Matrix acc = Matrix::Zero(3, 3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector dlt = (p->sample_grad(x, rng) - p->sample_grad(x, rng)) / std::sqrt(2.0);
    acc += dlt * dlt.transpose();
  }
  acc /= n;
  EXPECT_LE(op_norm(Matrix(acc - S.matrix())), 0.03 * op_norm(S));
}

TEST(EmaConsistency, StationarySaddleEstimate) {
  auto p = make_saddle_problem();
  Rng rng(8);
  const Vector x = Vector::NullaryExpr(2, [&] { return 2 * rng.uniform() - 1; });
  auto s = EmaEstimatorState::zero(2, 0.99);
  for (int t = 0; t < 5000; ++t) s = ema_update(s, p->sample_grad(x, rng));
  const double err = op_norm(s.g_hat - *p->exact_G(x));
  const double sigma = *p->conditional_sigma(x);
  EXPECT_LE(err, 5 * std::sqrt(1 - 0.99) * sigma * std::sqrt(std::log(2.0)));
}
