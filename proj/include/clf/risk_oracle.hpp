#pragma once

// Forgetting evaluated against population quantities: closed-form per-task
// risk, the exact Gaussian second-moment recursion for the SGD error, and a
// Monte-Carlo estimate over independent data draws.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "clf/errors.hpp"
#include "clf/parallel.hpp"
#include "clf/random.hpp"
#include "clf/sgd_engine.hpp"
#include "clf/task_model.hpp"

namespace clf {

struct RiskReport {
  std::vector<double> per_task_excess;  // indexed by task, not by training position
  double forgetting = 0.0;              // mean excess risk
  double raw_forgetting = 0.0;          // mean risk including sigma^2 / 2
  std::optional<double> bias_part;
  std::optional<double> variance_part;
  std::optional<double> std_error;
};

struct PopulationRisk {
  double raw = 0.0;
  double excess = 0.0;
};

/// raw = 1/2 (w - w*)^T H (w - w*) + sigma^2 / 2
inline PopulationRisk population_risk(const Vector& w, const TaskSpec& task) {
  detail::require<InvalidArgument>(w.size() == task.dim(), "population_risk: dimension mismatch");
  const Vector diff = w - task.w_star;
  const Vector coords =
      task.basis.is_identity() ? diff : Vector(task.basis.vectors().transpose() * diff);
  const double excess = 0.5 * coords.cwiseAbs2().dot(task.spectrum.values());
  return {excess + 0.5 * task.sigma * task.sigma, excess};
}

/// Per-task risks at w averaged over the whole task set.
inline RiskReport forgetting(const Vector& w, std::span<const TaskSpec> tasks) {
  detail::require<InvalidArgument>(!tasks.empty(), "forgetting: no tasks");
  RiskReport r;
  double raw = 0.0;
  for (const auto& t : tasks) {
    const auto risk = population_risk(w, t);
    r.per_task_excess.push_back(risk.excess);
    raw += risk.raw;
  }
  double sum = 0.0;
  for (double e : r.per_task_excess) sum += e;
  const double m = static_cast<double>(tasks.size());
  r.forgetting = sum / m;
  r.raw_forgetting = raw / m;
  return r;
}

namespace detail {

inline constexpr double kSymmetryTol = 1e-10;

inline void require_symmetric(const Matrix& a, const char* who) {
  require<InvalidArgument>(a.rows() == a.cols(), std::string(who) + ": matrix must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  require<InvalidArgument>((a - a.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * scale,
                           std::string(who) + ": matrix must be symmetric");
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace detail

/// E[(x^T A x) x x^T] for x ~ N(0, H): 2 H A H + tr(HA) H.
inline Matrix gaussian_fourth_operator(const Matrix& h, const Matrix& a) {
  detail::require_symmetric(a, "gaussian_fourth_operator");
  detail::require<InvalidArgument>(h.rows() == a.rows() && h.cols() == a.cols(),
                                   "gaussian_fourth_operator: dimension mismatch");
  const Matrix ha = h * a;
  return detail::symmetrize(2.0 * ha * h + ha.trace() * h);
}

/// E[(I - eta x x^T) A (I - eta x x^T)] for x ~ N(0, H).
inline Matrix step_operator(const Matrix& h, double eta, const Matrix& a) {
  detail::require_symmetric(a, "step_operator");
  detail::require<InvalidArgument>(h.rows() == a.rows(), "step_operator: dimension mismatch");
  const Matrix ha = h * a;
  Matrix out = a - eta * (ha + ha.transpose()) + (eta * eta) * gaussian_fourth_operator(h, a);
  return detail::symmetrize(out);
}

/// Bias and variance second-moment iterates of the SGD error.
struct IterateState {
  Matrix bias;      // B_t
  Matrix variance;  // C_t
  std::int64_t step = 0;
};

namespace detail {

inline bool same_basis(std::span<const TaskSpec> tasks) {
  const Matrix& ref = tasks.front().basis.vectors();
  for (const auto& t : tasks)
    if (t.dim() != ref.rows() || (t.basis.vectors() - ref).cwiseAbs().maxCoeff() > 1e-14)
      return false;
  return true;
}

inline bool same_optimum(std::span<const TaskSpec> tasks) {
  for (const auto& t : tasks)
    if (t.w_star != tasks.front().w_star) return false;
  return true;
}

inline void require_exact_regime(const ContinualConfig& config, std::span<const TaskSpec> tasks) {
  require<InvalidArgument>(!tasks.empty(), "exact oracle: no tasks");
  require<InvalidArgument>(is_permutation_of_range(config.ordering, tasks.size()),
                           "exact oracle: ordering is not a permutation of the tasks");
  require<UnsupportedModel>(same_optimum(tasks),
                            "exact oracle needs a shared w*; use the Monte-Carlo estimate");
  require<UnsupportedModel>(config.epochs == 1, "exact oracle covers one-pass training only");
  require<UnsupportedModel>(!config.step.is_adaptive(), "exact oracle needs a constant step");
  require<InvalidArgument>(config.w0.size() == tasks.front().dim(), "exact oracle: w0 dimension");
}

// One Gaussian step in the common eigenbasis where H = diag(lambda).
inline void diagonal_step(Matrix& s, const Vector& lambda, double eta) {
  const double eta2 = eta * eta;
  const double tr_hs = lambda.dot(s.diagonal());
  const Eigen::Index d = s.rows();
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i)
      s(i, j) *= 1.0 - eta * (lambda[i] + lambda[j]) + 2.0 * eta2 * lambda[i] * lambda[j];
  s.diagonal() += eta2 * tr_hs * lambda;
}

}  // namespace detail

/// Advances B (from B_0 = (w0 - w*)(w0 - w*)^T) and C (from 0) through the
/// ordered tasks, n_per_task steps each. Returned matrices are expressed in
/// the original coordinates.
inline IterateState exact_iterates(const ContinualConfig& config, std::span<const TaskSpec> tasks) {
  detail::require_exact_regime(config, tasks);
  const double eta = config.step.eta();
  const Vector diff = config.w0 - tasks.front().w_star;
  IterateState st;

  if (detail::same_basis(tasks)) {
    const Matrix& q = tasks.front().basis.vectors();
    const bool ident = tasks.front().basis.is_identity();
    const Vector omega = ident ? diff : Vector(q.transpose() * diff);
    Matrix b = omega * omega.transpose();
    Matrix c = Matrix::Zero(diff.size(), diff.size());
    for (int k : config.ordering) {
      const Vector& lambda = tasks[k].spectrum.values();
      const double noise = eta * eta * tasks[k].sigma * tasks[k].sigma;
      for (Eigen::Index t = 0; t < config.n_per_task; ++t) {
        detail::diagonal_step(b, lambda, eta);
        detail::diagonal_step(c, lambda, eta);
        c.diagonal() += noise * lambda;
        ++st.step;
      }
    }
    if (ident) {
      st.bias = detail::symmetrize(b);
      st.variance = detail::symmetrize(c);
    } else {
      st.bias = detail::symmetrize(q * b * q.transpose());
      st.variance = detail::symmetrize(q * c * q.transpose());
    }
    return st;
  }

  Matrix b = diff * diff.transpose();
  Matrix c = Matrix::Zero(diff.size(), diff.size());
  for (int k : config.ordering) {
    const Matrix h = covariance_matrix(tasks[k]);
    const double noise = eta * eta * tasks[k].sigma * tasks[k].sigma;
    for (Eigen::Index t = 0; t < config.n_per_task; ++t) {
      b = step_operator(h, eta, b);
      c = step_operator(h, eta, c) + noise * h;
      ++st.step;
    }
  }
  st.bias = std::move(b);
  st.variance = std::move(c);
  return st;
}

/// Expected forgetting of the final SGD iterate over Gaussian data draws:
/// per task 1/2 <H_k, B_MN + C_MN>, averaged over the task set.
inline RiskReport exact_expected_forgetting(const ContinualConfig& config,
                                            std::span<const TaskSpec> tasks) {
  const IterateState st = exact_iterates(config, tasks);
  RiskReport r;
  double bias = 0.0, var = 0.0, raw = 0.0;
  for (const auto& t : tasks) {
    const Matrix h = covariance_matrix(t);
    const double tb = 0.5 * h.cwiseProduct(st.bias).sum();
    const double tc = 0.5 * h.cwiseProduct(st.variance).sum();
    r.per_task_excess.push_back(tb + tc);
    bias += tb;
    var += tc;
    raw += tb + tc + 0.5 * t.sigma * t.sigma;
  }
  const double m = static_cast<double>(tasks.size());
  r.bias_part = bias / m;
  r.variance_part = var / m;
  double sum = 0.0;
  for (double e : r.per_task_excess) sum += e;
  r.forgetting = sum / m;
  r.raw_forgetting = raw / m;
  return r;
}

/// Seed of the dataset for (replication, task) under a base seed.
inline std::uint64_t replication_seed(std::uint64_t base, std::size_t rep, std::size_t task) {
  return derive_seed(base, {0x7265705fULL, rep, task});
}

/// Monte-Carlo mean of forgetting(final weights) over `reps` independent
/// dataset draws. Replications are reduced in index order.
inline RiskReport mc_expected_forgetting(const ContinualConfig& config,
                                         std::span<const TaskSpec> tasks, std::size_t reps,
                                         unsigned threads = 1) {
  detail::require<InvalidArgument>(reps >= 2, "mc_expected_forgetting needs reps >= 2");
  detail::require<InvalidArgument>(!tasks.empty(), "mc_expected_forgetting: no tasks");
  std::vector<RiskReport> per_rep(reps);
  parallel_for(reps, threads, [&](std::size_t rep) {
    std::vector<Dataset> data;
    data.reserve(tasks.size());
    for (std::size_t k = 0; k < tasks.size(); ++k)
      data.push_back(sample_batch(tasks[k], config.n_per_task,
                                  replication_seed(config.seed, rep, k), static_cast<int>(k)));
    per_rep[rep] = forgetting(final_weights(config, tasks, data), tasks);
  });

  RiskReport r;
  r.per_task_excess.assign(tasks.size(), 0.0);
  double mean = 0.0, raw = 0.0;
  for (const auto& rr : per_rep) {
    for (std::size_t k = 0; k < tasks.size(); ++k) r.per_task_excess[k] += rr.per_task_excess[k];
    mean += rr.forgetting;
    raw += rr.raw_forgetting;
  }
  const double n = static_cast<double>(reps);
  for (double& e : r.per_task_excess) e /= n;
  mean /= n;
  double ss = 0.0;
  for (const auto& rr : per_rep) ss += (rr.forgetting - mean) * (rr.forgetting - mean);
  r.forgetting = mean;
  r.raw_forgetting = raw / n;
  r.std_error = std::sqrt(ss / (n - 1.0) / n);
  return r;
}

/// Mean squared distance from w to each task optimum.
inline double distance_performance(const Vector& w, std::span<const Vector> optima) {
  detail::require<InvalidArgument>(!optima.empty(), "distance_performance: no optima");
  double sum = 0.0;
  for (const auto& o : optima) {
    detail::require<InvalidArgument>(o.size() == w.size(),
                                     "distance_performance: dimension mismatch");
    sum += (w - o).squaredNorm();
  }
  return sum / static_cast<double>(optima.size());
}

}  // namespace clf
