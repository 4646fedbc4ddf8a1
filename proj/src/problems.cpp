#include "apsgd/problems.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "apsgd/error.hpp"

namespace apsgd {

void StochasticProblem::check_dim(const Vector& x) const {
  if (x.size() != dim()) {
    throw Error(ErrorKind::DimMismatch, name() + ": expected dimension " + std::to_string(dim()) +
                                            ", got " + std::to_string(x.size()));
  }
}

namespace {

// ---------------------------------------------------------------- saddle

class SaddleProblem2D final : public StochasticProblem {
 public:
  std::string name() const override { return "saddle"; }
  int dim() const override { return 2; }

  double eval_f(const Vector& x) const override {
    check_dim(x);
    double f = 0.0;
    for (int j = 0; j < 2; ++j) f += 0.5 * kH[j] * x(j) * x(j) + std::pow(x(j), 10);
    return f;
  }

  Vector grad(const Vector& x) const override {
    check_dim(x);
    Vector g(2);
    for (int j = 0; j < 2; ++j) g(j) = kH[j] * x(j) + 10.0 * std::pow(x(j), 9);
    return g;
  }

  Vector sample_grad(const Vector& x, Rng& rng) const override {
    const auto& b = kSupport[rng.uniform_index(kSupport.size())];
    Vector g = grad(x);
    g(0) += b[0];
    g(1) += b[1];
    return g;
  }

  std::optional<SymMatrix> exact_G(const Vector& x) const override {
    Vector m = grad(x);
    Matrix G = Matrix::Zero(2, 2);
    for (const auto& b : kSupport) {
      Vector v = m + Vector{{b[0], b[1]}};
      G += v * v.transpose();
    }
    return SymMatrix(G / static_cast<double>(kSupport.size()));
  }

  std::optional<double> conditional_sigma(const Vector& x) const override {
    const Matrix G = exact_G(x)->matrix();
    const Vector m = grad(x);
    Matrix V = Matrix::Zero(2, 2);
    for (const auto& b : kSupport) {
      const Vector v = m + Vector{{b[0], b[1]}};
      const Matrix D = v * v.transpose() - G;
      V += D * D;
    }
    return std::sqrt(op_norm(SymMatrix(V / static_cast<double>(kSupport.size()))));
  }

  std::optional<SymMatrix> hessian(const Vector& x) const override {
    check_dim(x);
    Vector d(2);
    for (int j = 0; j < 2; ++j) d(j) = kH[j] + 90.0 * std::pow(x(j), 8);
    return SymMatrix::diagonal(d);
  }

  // Constants over the box |x_j| <= 1.
  ProblemSmoothness smoothness() const override {
    ProblemSmoothness s;
    s.L = 91.0;
    s.rho = 720.0;
    return s;
  }

 private:
  static constexpr std::array<double, 2> kH{1.0, -0.1};
  static constexpr std::array<std::array<double, 2>, 4> kSupport{
      {{1.0, 0.1}, {1.0, -0.1}, {-1.0, 0.1}, {-1.0, -0.1}}};
};

// ---------------------------------------------------------- counterexample

class CounterexampleProblem final : public StochasticProblem {
 public:
  CounterexampleProblem(double C, double zeta) : C_(C), zeta_(zeta), p_((1.0 + zeta) / (C + 1.0)) {}

  std::string name() const override { return "counterexample"; }
  int dim() const override { return 1; }

  double eval_f(const Vector& x) const override {
    check_dim(x);
    return zeta_ * x(0);
  }

  Vector grad(const Vector& x) const override {
    check_dim(x);
    return Vector::Constant(1, zeta_);
  }

  Vector sample_grad(const Vector& x, Rng& rng) const override {
    check_dim(x);
    return Vector::Constant(1, rng.uniform() < p_ ? C_ : -1.0);
  }

  std::optional<SymMatrix> exact_G(const Vector& x) const override {
    check_dim(x);
    return SymMatrix(Matrix::Constant(1, 1, second_moment()));
  }

  std::optional<SymMatrix> hessian(const Vector& x) const override {
    check_dim(x);
    return SymMatrix::zero(1);
  }

  std::optional<Box> domain() const override { return Box{-1.0, 1.0}; }

  std::optional<double> conditional_sigma(const Vector& x) const override {
    check_dim(x);
    return *smoothness().sigma_max;
  }

  ProblemSmoothness smoothness() const override {
    const double G = second_moment();
    const double fourth = p_ * std::pow(C_, 4) + (1.0 - p_);
    ProblemSmoothness s;
    s.L = 0.0;
    s.rho = 0.0;
    s.alpha = 0.0;
    s.L_G = 0.0;
    s.sigma_max = std::sqrt(fourth - G * G);
    s.R = std::max(C_ * C_ - G, G - 1.0);
    s.M_step = C_ / std::sqrt(G);
    return s;
  }

  std::optional<double> f_star() const override { return -zeta_; }

 private:
  // Enumerated over the two outcomes; equals C (1 + zeta) - zeta.
  double second_moment() const { return p_ * C_ * C_ + (1.0 - p_); }

  double C_;
  double zeta_;
  double p_;
};

// ------------------------------------------------------ quadratic-gaussian

class QuadraticGaussianProblem final : public StochasticProblem {
 public:
  QuadraticGaussianProblem(SymMatrix H, SymMatrix noise_cov)
      : H_(std::move(H)), noise_cov_(std::move(noise_cov)), noise_root_(sym_power(noise_cov_, 0.5, 0.0)) {}

  std::string name() const override { return "quadratic"; }
  int dim() const override { return H_.dim(); }

  double eval_f(const Vector& x) const override {
    check_dim(x);
    return 0.5 * x.dot(H_ * x);
  }

  Vector grad(const Vector& x) const override {
    check_dim(x);
    return H_ * x;
  }

  Vector sample_grad(const Vector& x, Rng& rng) const override {
    Vector z = rng.normal_vector(dim());
    return grad(x) + noise_root_ * z;
  }

  std::optional<SymMatrix> exact_G(const Vector& x) const override {
    Vector m = grad(x);
    return SymMatrix(m * m.transpose() + noise_cov_.matrix());
  }

  std::optional<double> conditional_sigma(const Vector& x) const override {
    return std::sqrt(op_norm(gaussian_outer_variance(grad(x), noise_cov_)));
  }

  std::optional<SymMatrix> hessian(const Vector& x) const override {
    check_dim(x);
    return H_;
  }

  ProblemSmoothness smoothness() const override {
    ProblemSmoothness s;
    s.L = op_norm(H_);
    s.rho = 0.0;
    return s;
  }

  std::optional<double> f_star() const override {
    if (H_.lambda_min() >= 0.0) return 0.0;
    return std::nullopt;
  }

 private:
  SymMatrix H_;
  SymMatrix noise_cov_;
  SymMatrix noise_root_;
};

// ----------------------------------------------------- logistic regression

double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class LogisticRegressionProblem final : public StochasticProblem {
 public:
  LogisticRegressionProblem(LabeledData data, int batch) : data_(std::move(data)), batch_(batch) {}

  std::string name() const override { return "logistic"; }
  int dim() const override { return static_cast<int>(data_.features.cols()); }

  double eval_f(const Vector& w) const override {
    check_dim(w);
    const Vector z = data_.features * w;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += log1p_exp(z(i)) - data_.labels(i) * z(i);
    return total / static_cast<double>(z.size());
  }

  Vector grad(const Vector& w) const override {
    check_dim(w);
    const Vector z = data_.features * w;
    Vector resid(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) resid(i) = sigmoid(z(i)) - data_.labels(i);
    return data_.features.transpose() * resid / static_cast<double>(z.size());
  }

  Vector sample_grad(const Vector& w, Rng& rng) const override {
    check_dim(w);
    const auto n = static_cast<std::size_t>(data_.features.rows());
    if (static_cast<std::size_t>(batch_) == n) return grad(w);
    std::vector<Eigen::Index> picked;
    picked.reserve(batch_);
    // Selection sampling (Knuth's algorithm S): uniform subset, ordered.
    std::size_t needed = batch_;
    for (std::size_t i = 0; i < n && needed > 0; ++i) {
      if (rng.uniform() * static_cast<double>(n - i) < static_cast<double>(needed)) {
        picked.push_back(static_cast<Eigen::Index>(i));
        --needed;
      }
    }
    Vector g = Vector::Zero(dim());
    for (Eigen::Index i : picked) {
      const auto row = data_.features.row(i);
      g += (sigmoid(row.dot(w)) - data_.labels(i)) * row.transpose();
    }
    return g / static_cast<double>(batch_);
  }

  std::optional<SymMatrix> hessian(const Vector& w) const override {
    check_dim(w);
    const Vector z = data_.features * w;
    Vector weights(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double s = sigmoid(z(i));
      weights(i) = s * (1.0 - s);
    }
    Matrix Hm = data_.features.transpose() * weights.asDiagonal() * data_.features;
    return SymMatrix(Hm / static_cast<double>(z.size()));
  }

  ProblemSmoothness smoothness() const override {
    ProblemSmoothness s;
    Matrix XtX = data_.features.transpose() * data_.features;
    s.L = 0.25 * op_norm(SymMatrix(XtX)) / static_cast<double>(data_.features.rows());
    return s;
  }

 private:
  LabeledData data_;
  int batch_;
};

}  // namespace

ProblemPtr make_saddle_problem() { return std::make_shared<SaddleProblem2D>(); }

double saddle_local_min_value() {
  // -0.05 t^2 + t^10 is minimized at t^8 = 0.01.
  const double t = std::pow(0.01, 1.0 / 8.0);
  return -0.05 * t * t + std::pow(t, 10);
}

ProblemPtr make_counterexample(double C, double zeta) {
  if (!(C > 1.0) || !std::isfinite(C)) throw Error(ErrorKind::InvalidParam, "counterexample needs C > 1");
  if (!(zeta > 0.0 && zeta < C)) throw Error(ErrorKind::InvalidParam, "counterexample needs 0 < zeta < C");
  return std::make_shared<CounterexampleProblem>(C, zeta);
}

ProblemPtr make_quadratic_gaussian(const SymMatrix& H, const SymMatrix& noise_cov) {
  if (H.dim() != noise_cov.dim()) {
    throw Error(ErrorKind::InvalidParam, "H and noise covariance dimensions differ");
  }
  const double tol = 1e-12 * std::max(1.0, op_norm(noise_cov));
  if (noise_cov.lambda_min() < -tol) {
    throw Error(ErrorKind::InvalidParam, "noise covariance must be positive semidefinite");
  }
  return std::make_shared<QuadraticGaussianProblem>(H, noise_cov);
}

ProblemPtr make_logistic_regression(LabeledData data, int batch) {
  const auto n = data.features.rows();
  if (n == 0 || data.features.cols() == 0) throw Error(ErrorKind::DataFormatError, "empty dataset");
  if (data.labels.size() != n) {
    throw Error(ErrorKind::DataFormatError, "label count " + std::to_string(data.labels.size()) +
                                                " does not match row count " + std::to_string(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.labels(i) != 0.0 && data.labels(i) != 1.0) {
      throw Error(ErrorKind::DataFormatError, "labels must be 0 or 1");
    }
  }
  if (!data.features.allFinite()) throw Error(ErrorKind::DataFormatError, "non-finite feature value");
  if (batch < 1 || batch > n) throw Error(ErrorKind::InvalidParam, "batch must be in [1, n]");
  return std::make_shared<LogisticRegressionProblem>(std::move(data), batch);
}

LabeledData make_separable_with_noise(int n, int d, double flip_prob, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(ErrorKind::InvalidParam, "need n >= 1 and d >= 1");
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) throw Error(ErrorKind::InvalidParam, "flip_prob in [0, 0.5)");
  Rng rng(seed, 0x6c6f67);
  Vector teacher = rng.normal_vector(d);
  teacher /= teacher.norm();
  LabeledData data{Matrix(n, d), Vector(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = rng.normal();
    double label = data.features.row(i).dot(teacher) > 0.0 ? 1.0 : 0.0;
    if (rng.uniform() < flip_prob) label = 1.0 - label;
    data.labels(i) = label;
  }
  return data;
}

LabeledData load_labeled_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::DataFormatError, "cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::DataFormatError, "missing header row");
  const auto header = split(line);
  if (header.size() < 2 || header.back() != "label") {
    throw Error(ErrorKind::DataFormatError, "last header column must be `label`");
  }
  const std::size_t width = header.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != width) {
      throw Error(ErrorKind::DataFormatError, "line " + std::to_string(line_no) + ": expected " +
                                                  std::to_string(width) + " columns");
    }
    std::vector<double> row;
    row.reserve(width);
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty()) {
        throw Error(ErrorKind::DataFormatError, "line " + std::to_string(line_no) + ": bad number '" + c + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  LabeledData data{Matrix(rows.size(), width - 1), Vector(rows.size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j) data.features(i, j) = rows[i][j];
    data.labels(i) = rows[i][width - 1];
  }
  return data;
}

SymMatrix gaussian_outer_variance(const Vector& mean, const SymMatrix& cov) {
  if (mean.size() != cov.dim()) throw Error(ErrorKind::DimMismatch, "gaussian_outer_variance");
  const Matrix& S = cov.matrix();
  const Matrix mm = mean * mean.transpose();
  const Matrix G = mm + S;
  Matrix V = mean.squaredNorm() * S + mm * S + S * mm + S.trace() * G + S * S;
  return SymMatrix(V);
}

}  // namespace apsgd
