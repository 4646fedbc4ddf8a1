#pragma once

#include <Eigen/Dense>

#include <memory>
#include <span>

namespace apsgd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Eigenvalues ascending, eigenvectors stored as orthonormal columns.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
};

// Dense symmetric matrix. Entries are symmetrized as (M + M^T)/2 on
// construction and must be finite. The eigendecomposition is computed on
// first use and shared between copies.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& m);
  SymMatrix(const SymMatrix& o);
  SymMatrix& operator=(const SymMatrix& o);
  SymMatrix(SymMatrix&&) noexcept = default;
  SymMatrix& operator=(SymMatrix&&) noexcept = default;

  static SymMatrix identity(int dim);
  static SymMatrix zero(int dim);
  static SymMatrix diagonal(const Vector& diag);
  static SymMatrix outer(const Vector& v);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }

  const EigenDecomposition& eigen() const;
  double lambda_min() const;
  double lambda_max() const;
  double trace() const { return m_.trace(); }
  Vector diag() const { return m_.diagonal(); }

  // Diagonal part as a SymMatrix.
  SymMatrix diagonal_part() const;

  SymMatrix operator+(const SymMatrix& o) const;
  SymMatrix operator-(const SymMatrix& o) const;
  SymMatrix operator*(double s) const;
  Vector operator*(const Vector& v) const { return m_ * v; }
  SymMatrix add_identity(double s) const;

 private:
  Matrix m_;
  mutable std::shared_ptr<const EigenDecomposition> eig_;
};

// V diag(max(lambda_i, clamp_floor)^p) V^T. Negative exponents require every
// clamped eigenvalue to be strictly positive.
SymMatrix sym_power(const SymMatrix& m, double p, double clamp_floor = 0.0);

// max |lambda_i|
double op_norm(const SymMatrix& m);

// Operator norm of a general (possibly non-symmetric) matrix, via the largest
// singular value.
double op_norm(const Matrix& m);

// || G^{-1} - Ghat^{-1} || <= 2 eps / lambda_min(G)^2 whenever
// ||G - Ghat|| <= eps and eps ||G^{-1}|| < 1/2.
double inv_perturbation_bound(double lambda_min_G, double eps);

// || G^{1/2} - Ghat^{1/2} || <= eps / sqrt(lambda_min(G)) for eps < 3/4 lambda_min(G).
double sqrt_perturbation_bound(double lambda_min_G, double eps);

// || (G + delta I)^{-1/2} - (Ghat + delta I)^{-1/2} || <= eps / (2 (delta + lambda_min(G))^{3/2}).
double invsqrt_preconditioner_bound(double lambda_min_G, double delta_reg, double eps);

bool all_finite(const Vector& v);

}  // namespace apsgd
