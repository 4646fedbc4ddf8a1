#include "apsgd/linalg.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "apsgd/error.hpp"

namespace apsgd {

bool all_finite(const Vector& v) { return v.allFinite(); }

SymMatrix::SymMatrix(const Matrix& m) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    throw Error(ErrorKind::DimMismatch, "SymMatrix needs a non-empty square matrix, got " +
                                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, "SymMatrix entries must be finite");
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix::SymMatrix(const SymMatrix& o) : m_(o.m_), eig_(std::atomic_load(&o.eig_)) {}

SymMatrix& SymMatrix::operator=(const SymMatrix& o) {
  if (this != &o) {
    m_ = o.m_;
    eig_ = std::atomic_load(&o.eig_);
  }
  return *this;
}

SymMatrix SymMatrix::identity(int dim) { return SymMatrix(Matrix::Identity(dim, dim)); }
SymMatrix SymMatrix::zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }
SymMatrix SymMatrix::diagonal(const Vector& diag) { return SymMatrix(Matrix(diag.asDiagonal())); }
SymMatrix SymMatrix::outer(const Vector& v) { return SymMatrix(v * v.transpose()); }

const EigenDecomposition& SymMatrix::eigen() const {
  auto cached = std::atomic_load(&eig_);
  if (!cached) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m_);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::NonFinite, "eigendecomposition did not converge");
    }
    auto fresh = std::make_shared<const EigenDecomposition>(
        EigenDecomposition{solver.eigenvalues(), solver.eigenvectors()});
    // Two threads may race to fill the cache; both results are identical.
    std::atomic_store(&eig_, std::shared_ptr<const EigenDecomposition>(fresh));
    cached = fresh;
  }
  return *cached;
}

double SymMatrix::lambda_min() const { return eigen().eigenvalues(0); }
double SymMatrix::lambda_max() const { return eigen().eigenvalues(dim() - 1); }

SymMatrix SymMatrix::diagonal_part() const { return diagonal(m_.diagonal()); }

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
  if (o.dim() != dim()) throw Error(ErrorKind::DimMismatch, "SymMatrix sum");
  return SymMatrix(m_ + o.m_);
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
  if (o.dim() != dim()) throw Error(ErrorKind::DimMismatch, "SymMatrix difference");
  return SymMatrix(m_ - o.m_);
}

SymMatrix SymMatrix::operator*(double s) const { return SymMatrix(m_ * s); }

SymMatrix SymMatrix::add_identity(double s) const {
  Matrix out = m_;
  out.diagonal().array() += s;
  return SymMatrix(out);
}

SymMatrix sym_power(const SymMatrix& m, double p, double clamp_floor) {
  if (!std::isfinite(p)) throw Error(ErrorKind::NonFinite, "sym_power exponent");
  if (!(clamp_floor >= 0.0)) throw Error(ErrorKind::InvalidParam, "clamp_floor must be >= 0");
  const auto& eig = m.eigen();
  Vector lam = eig.eigenvalues.cwiseMax(clamp_floor);
  if (p < 0.0 && lam.minCoeff() <= 0.0) {
    throw Error(ErrorKind::SingularMatrix,
                "negative power of a matrix with eigenvalue " + std::to_string(lam.minCoeff()));
  }
  Vector powered = lam.unaryExpr([p](double v) { return std::pow(v, p); });
  const Matrix& V = eig.eigenvectors;
  return SymMatrix(V * powered.asDiagonal() * V.transpose());
}

double op_norm(const SymMatrix& m) {
  const auto& lam = m.eigen().eigenvalues;
  return std::max(std::abs(lam(0)), std::abs(lam(lam.size() - 1)));
}

double op_norm(const Matrix& m) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, "op_norm of non-finite matrix");
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

namespace {

void require_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(ErrorKind::InvalidParam, std::string(name) + " must be finite and >= 0");
  }
}

}  // namespace

double inv_perturbation_bound(double lambda_min_G, double eps) {
  require_nonneg(eps, "eps");
  if (!(lambda_min_G > 0.0)) throw Error(ErrorKind::InvalidParam, "lambda_min(G) must be > 0");
  if (!(eps < 0.5 * lambda_min_G)) {
    throw Error(ErrorKind::PreconditionViolated, "need eps * ||G^{-1}|| < 1/2");
  }
  return 2.0 * eps / (lambda_min_G * lambda_min_G);
}

double sqrt_perturbation_bound(double lambda_min_G, double eps) {
  require_nonneg(eps, "eps");
  if (!(lambda_min_G > 0.0)) throw Error(ErrorKind::InvalidParam, "lambda_min(G) must be > 0");
  if (!(eps < 0.75 * lambda_min_G)) {
    throw Error(ErrorKind::PreconditionViolated, "need eps < 3/4 lambda_min(G)");
  }
  return eps / std::sqrt(lambda_min_G);
}

double invsqrt_preconditioner_bound(double lambda_min_G, double delta_reg, double eps) {
  require_nonneg(lambda_min_G, "lambda_min(G)");
  require_nonneg(delta_reg, "delta");
  require_nonneg(eps, "eps");
  const double shifted = lambda_min_G + delta_reg;
  if (!(shifted > 0.0)) throw Error(ErrorKind::PreconditionViolated, "need delta + lambda_min(G) > 0");
  // Both the inverse and square-root lemmas applied to G + delta I.
  if (!(eps < 0.5 * shifted)) {
    throw Error(ErrorKind::PreconditionViolated, "eps too large for G + delta I");
  }
  return eps / (2.0 * std::pow(shifted, 1.5));
}

}  // namespace apsgd
