#pragma once

// Population models for a sequence of linear-regression tasks: covariance
// spectra, eigenbases, target weights and i.i.d. Gaussian sampling.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clf/errors.hpp"
#include "clf/random.hpp"

namespace clf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Nonincreasing, nonnegative, finite covariance eigenvalues.
class Spectrum {
public:
  Spectrum() = default;

  explicit Spectrum(Vector eigenvalues) : values_(std::move(eigenvalues)) {
    detail::require<InvalidArgument>(values_.size() >= 1, "spectrum must have dimension >= 1");
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      detail::require<InvalidArgument>(std::isfinite(values_[i]) && values_[i] >= 0.0,
                                       "spectrum eigenvalues must be finite and nonnegative");
      if (i > 0)
        detail::require<InvalidArgument>(values_[i] <= values_[i - 1],
                                         "spectrum eigenvalues must be nonincreasing");
    }
  }

  const Vector& values() const noexcept { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }
  Eigen::Index dim() const noexcept { return values_.size(); }
  double trace() const { return values_.sum(); }

private:
  Vector values_;
};

/// Orthonormal eigenbasis stored column-wise.
class Basis {
public:
  static constexpr double kOrthonormalTol = 1e-10;

  Basis() = default;

  explicit Basis(Matrix vectors) : vectors_(std::move(vectors)) {
    detail::require<InvalidArgument>(vectors_.rows() == vectors_.cols() && vectors_.rows() >= 1,
                                     "basis must be a nonempty square matrix");
    const Matrix gram = vectors_.transpose() * vectors_;
    const double err =
        (gram - Matrix::Identity(vectors_.rows(), vectors_.cols())).cwiseAbs().maxCoeff();
    detail::require<InvalidArgument>(err <= kOrthonormalTol, "basis columns are not orthonormal");
    identity_ = vectors_.isIdentity(0.0);
  }

  const Matrix& vectors() const noexcept { return vectors_; }
  Eigen::Index dim() const noexcept { return vectors_.rows(); }
  bool is_identity() const noexcept { return identity_; }

private:
  Matrix vectors_;
  bool identity_ = false;
};

enum class BasisMode { identity, random_orthogonal };

/// One task's population model. Gaussian tasks carry alpha = 3, beta = 1.
struct TaskSpec {
  Spectrum spectrum;
  Basis basis;
  Vector w_star;
  double sigma = 0.0;
  double alpha = 3.0;
  double beta = 1.0;

  Eigen::Index dim() const noexcept { return spectrum.dim(); }
};

struct Dataset {
  Matrix features;  // N x d, one sample per row
  Vector responses;
  int task_index = 0;

  Eigen::Index size() const noexcept { return features.rows(); }
};

/// lambda_i = i^{-p}, i = 1..d.
inline Spectrum make_power_law_spectrum(Eigen::Index d, double p) {
  detail::require<InvalidArgument>(d >= 1, "power-law spectrum needs d >= 1");
  detail::require<InvalidArgument>(p > 0.0 && std::isfinite(p), "power-law exponent must be > 0");
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = std::pow(static_cast<double>(i + 1), -p);
  return Spectrum(std::move(v));
}

/// Identity, or a Haar-distributed orthogonal matrix from the QR factors of
/// a Gaussian matrix (column signs fixed by diag(R) > 0).
inline Basis sample_basis(Eigen::Index d, BasisMode mode, std::uint64_t seed) {
  detail::require<InvalidArgument>(d >= 1, "basis needs d >= 1");
  if (mode == BasisMode::identity) return Basis(Matrix::Identity(d, d));

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  // Re-orthonormalize once to keep ||Q^T Q - I|| at machine precision.
  Eigen::HouseholderQR<Matrix> polish(q);
  Matrix q2 = polish.householderQ() * Matrix::Identity(d, d);
  const Matrix r2 = polish.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r2(j, j) < 0.0) q2.col(j) *= -1.0;
  return Basis(std::move(q2));
}

/// All-ones direction scaled to unit Euclidean norm.
inline Vector default_w_star(Eigen::Index d) {
  return Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
}

inline TaskSpec make_task(Spectrum spectrum, Basis basis, Vector w_star, double sigma) {
  detail::require<InvalidArgument>(spectrum.dim() == basis.dim() && spectrum.dim() == w_star.size(),
                                   "task dimensions disagree");
  detail::require<InvalidArgument>(sigma >= 0.0 && std::isfinite(sigma), "sigma must be >= 0");
  detail::require<InvalidArgument>(w_star.allFinite(), "w_star must be finite");
  TaskSpec t;
  t.spectrum = std::move(spectrum);
  t.basis = std::move(basis);
  t.w_star = std::move(w_star);
  t.sigma = sigma;
  return t;
}

/// H = B diag(lambda) B^T, exactly symmetric.
inline Matrix covariance_matrix(const TaskSpec& task) {
  const Matrix& b = task.basis.vectors();
  Matrix h = b * task.spectrum.values().asDiagonal() * b.transpose();
  return 0.5 * (h + h.transpose());
}

/// Zero-mean Gaussian features x = B diag(sqrt(lambda)) g.
struct GaussianFeatures {
  void operator()(Rng& rng, const TaskSpec& task, Eigen::Ref<Matrix> out) const {
    std::normal_distribution<double> normal;
    const Eigen::Index d = task.dim();
    const Vector scale = task.spectrum.values().cwiseSqrt();
    Vector g(d);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (Eigen::Index i = 0; i < d; ++i) g[i] = scale[i] * normal(rng);
      if (task.basis.is_identity())
        out.row(r) = g.transpose();
      else
        out.row(r) = (task.basis.vectors() * g).transpose();
    }
  }
};

/// Draws n i.i.d. pairs y = x^T w* + z, z ~ N(0, sigma^2). Features are
/// drawn first, then the noise, from a single stream seeded by `seed`.
template <class FeatureSampler = GaussianFeatures>
Dataset sample_batch(const TaskSpec& task, Eigen::Index n, std::uint64_t seed,
                     int task_index = 0, const FeatureSampler& sampler = {}) {
  detail::require<InvalidArgument>(n >= 1, "sample_batch needs n >= 1");
  Rng rng = make_rng(seed);
  Dataset ds;
  ds.task_index = task_index;
  ds.features.resize(n, task.dim());
  sampler(rng, task, ds.features);
  ds.responses = ds.features * task.w_star;
  if (task.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, task.sigma);
    for (Eigen::Index r = 0; r < n; ++r) ds.responses[r] += noise(rng);
  }
  return ds;
}

}  // namespace clf
