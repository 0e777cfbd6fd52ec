#pragma once

// Hand-rolled generators and independent reference computations shared by
// the unit tests.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "clf/random.hpp"
#include "clf/sgd_engine.hpp"
#include "clf/task_model.hpp"

namespace clf::testkit {

struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(make_rng(seed)) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Eigen::Index integer(Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
  }
  double normal() { return std::normal_distribution<double>()(rng); }

  Vector vector(Eigen::Index d, double lo = -1.0, double hi = 1.0) {
    Vector v(d);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }

  Matrix psd(Eigen::Index d) {
    Matrix g(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal();
    Matrix a = g * g.transpose() / static_cast<double>(d);
    return 0.5 * (a + a.transpose());
  }

  Spectrum spectrum(Eigen::Index d) {
    const double p = uniform(0.5, 3.0), c = uniform(0.5, 2.0);
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = c * std::pow(static_cast<double>(i + 1), -p);
    return Spectrum(v);
  }

  // M tasks sharing a basis and w*.
  std::vector<TaskSpec> shared_tasks(Eigen::Index d, std::size_t m, double sigma, bool rotate) {
    const Basis b = sample_basis(d, rotate ? BasisMode::random_orthogonal : BasisMode::identity,
                                 rng());
    const Vector w_star = vector(d);
    std::vector<TaskSpec> tasks;
    for (std::size_t k = 0; k < m; ++k) tasks.push_back(make_task(spectrum(d), b, w_star, sigma));
    return tasks;
  }
};

/// E[(I - eta x x^T) A (I - eta x x^T)] for x ~ N(0, H), entrywise from
/// Isserlis: E[x_i x_k x_l x_j] = H_ik H_lj + H_il H_kj + H_ij H_kl.
inline Matrix isserlis_step(const Matrix& h, double eta, const Matrix& a) {
  const Eigen::Index d = h.rows();
  Matrix out = a - eta * (h * a + a * h);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l < d; ++l)
          s += a(k, l) * (h(i, k) * h(l, j) + h(i, l) * h(k, j) + h(i, j) * h(k, l));
      out(i, j) += eta * eta * s;
    }
  return out;
}

/// Expected forgetting via the Isserlis step on the full second moment
/// S = E[(w - w*)(w - w*)^T], which obeys S' = step(S) + eta^2 sigma^2 H.
inline double reference_expected_forgetting(const ContinualConfig& cfg,
                                            const std::vector<TaskSpec>& tasks) {
  const Vector diff = cfg.w0 - tasks.front().w_star;
  Matrix s = diff * diff.transpose();
  const double eta = cfg.step.eta();
  for (int k : cfg.ordering) {
    const Matrix h = covariance_matrix(tasks[k]);
    for (Eigen::Index t = 0; t < cfg.n_per_task; ++t)
      s = isserlis_step(h, eta, s) + eta * eta * tasks[k].sigma * tasks[k].sigma * h;
  }
  double total = 0.0;
  for (const auto& t : tasks) total += 0.5 * (covariance_matrix(t).cwiseProduct(s)).sum();
  return total / static_cast<double>(tasks.size());
}

inline double min_eigenvalue(const Matrix& a) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (a + a.transpose())).eigenvalues().minCoeff();
}

}  // namespace clf::testkit
