#pragma once

// Continual training over a task sequence: constant-step single-sample SGD,
// the ||x||^{-2} adaptive step, and the sequential minimum-norm interpolator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clf/errors.hpp"
#include "clf/task_model.hpp"

namespace clf {

/// Constant step eta, or the per-sample adaptive rule eta = ||x||^{-2}.
class StepRule {
public:
  static StepRule constant(double eta) {
    detail::require<InvalidArgument>(eta >= 0.0 && std::isfinite(eta), "step size must be >= 0");
    return StepRule(eta, false);
  }
  static StepRule adaptive() { return StepRule(0.0, true); }

  bool is_adaptive() const noexcept { return adaptive_; }
  double eta() const noexcept { return eta_; }

private:
  StepRule(double eta, bool adaptive) : eta_(eta), adaptive_(adaptive) {}
  double eta_;
  bool adaptive_;
};

struct ContinualConfig {
  StepRule step = StepRule::constant(0.01);
  Eigen::Index n_per_task = 1;
  std::vector<int> ordering;  // 0-based task indices in training order
  Vector w0;
  std::uint64_t seed = 0;
  int epochs = 1;
};

/// Identity ordering 0..M-1.
inline std::vector<int> identity_ordering(std::size_t m) {
  std::vector<int> o(m);
  for (std::size_t i = 0; i < m; ++i) o[i] = static_cast<int>(i);
  return o;
}

inline bool is_permutation_of_range(std::span<const int> ordering, std::size_t m) {
  if (ordering.size() != m) return false;
  std::vector<bool> seen(m, false);
  for (int k : ordering) {
    if (k < 0 || static_cast<std::size_t>(k) >= m || seen[k]) return false;
    seen[k] = true;
  }
  return true;
}

struct ModelState {
  Vector weights;
  int task_position = 0;  // 1..M, 0 before training
  std::int64_t iteration = 0;
};

struct Checkpoint {
  std::int64_t step = 0;
  Vector weights;
};

struct Trajectory {
  std::vector<Checkpoint> checkpoints;
  ModelState final;
  std::vector<std::string> warnings;
};

/// w - eta (x^T w - y) x
inline Vector sgd_step(const Vector& w, const Vector& x, double y, double eta) {
  detail::require<InvalidArgument>(w.size() == x.size(), "sgd_step: dimension mismatch");
  return w - (eta * (x.dot(w) - y)) * x;
}

/// sgd_step with eta = ||x||^{-2}; the updated weights interpolate (x, y).
inline Vector adaptive_sgd_step(const Vector& w, const Vector& x, double y) {
  detail::require<InvalidArgument>(w.size() == x.size(), "adaptive_sgd_step: dimension mismatch");
  const double sq = x.squaredNorm();
  detail::require<DegenerateSample>(sq > 0.0, "adaptive step on a zero feature vector");
  return w - ((x.dot(w) - y) / sq) * x;
}

namespace detail {

// Per-step checkpoints are kept only while d * steps stays below this.
inline constexpr double kFullTrajectoryBudget = 1e6;

inline void apply_row(Vector& w, const Eigen::Ref<const Eigen::RowVectorXd>& x, double y,
                      const StepRule& step) {
  const double residual = x.dot(w) - y;
  if (step.is_adaptive()) {
    const double sq = x.squaredNorm();
    require<DegenerateSample>(sq > 0.0, "adaptive step on a zero feature vector");
    w.noalias() -= (residual / sq) * x.transpose();
  } else {
    w.noalias() -= (step.eta() * residual) * x.transpose();
  }
}

}  // namespace detail

/// `epochs` passes over the rows of `data` in row order. Per-step
/// checkpoints are recorded when d * steps <= 1e6, else start and end only.
inline Trajectory train_task(const Vector& w, const Dataset& data, const StepRule& step,
                             int epochs = 1, std::int64_t first_step = 0) {
  detail::require<InvalidArgument>(data.size() >= 1, "train_task: empty dataset");
  detail::require<InvalidArgument>(epochs >= 1, "train_task: epochs must be >= 1");
  detail::require<InvalidArgument>(data.features.cols() == w.size(),
                                   "train_task: dimension mismatch");
  const std::int64_t steps = static_cast<std::int64_t>(data.size()) * epochs;
  const bool keep_all =
      static_cast<double>(w.size()) * static_cast<double>(steps) <= detail::kFullTrajectoryBudget;

  Trajectory traj;
  Vector cur = w;
  traj.checkpoints.push_back({first_step, cur});
  std::int64_t t = first_step;
  for (int e = 0; e < epochs; ++e) {
    for (Eigen::Index r = 0; r < data.size(); ++r) {
      detail::apply_row(cur, data.features.row(r), data.responses[r], step);
      ++t;
      if (keep_all) traj.checkpoints.push_back({t, cur});
    }
  }
  if (!keep_all) traj.checkpoints.push_back({t, cur});
  traj.final.weights = std::move(cur);
  traj.final.iteration = t;
  traj.final.task_position = 1;
  return traj;
}

/// R^2 = max_m alpha_m tr(H_m).
inline double max_fourth_moment_radius(std::span<const TaskSpec> tasks) {
  double r2 = 0.0;
  for (const auto& t : tasks) r2 = std::max(r2, t.alpha * t.spectrum.trace());
  return r2;
}

/// Warning text when a constant step exceeds 1/R^2.
inline std::optional<std::string> step_size_warning(const ContinualConfig& config,
                                                    std::span<const TaskSpec> tasks) {
  if (config.step.is_adaptive()) return std::nullopt;
  const double r2 = max_fourth_moment_radius(tasks);
  if (r2 > 0.0 && config.step.eta() > 1.0 / r2)
    return "step size " + std::to_string(config.step.eta()) + " exceeds 1/R^2 = " +
           std::to_string(1.0 / r2);
  return std::nullopt;
}

namespace detail {

inline void validate_sequence(const ContinualConfig& config, std::span<const TaskSpec> tasks,
                              std::span<const Dataset> datasets) {
  require<InvalidArgument>(!tasks.empty(), "train_sequence: no tasks");
  require<InvalidArgument>(datasets.size() == tasks.size(),
                           "train_sequence: one dataset per task required");
  require<InvalidArgument>(is_permutation_of_range(config.ordering, tasks.size()),
                           "train_sequence: ordering is not a permutation of the tasks");
  require<InvalidArgument>(config.n_per_task >= 1, "train_sequence: n_per_task must be >= 1");
  require<InvalidArgument>(config.epochs >= 1, "train_sequence: epochs must be >= 1");
  require<InvalidArgument>(config.w0.size() == tasks.front().dim(),
                           "train_sequence: w0 dimension mismatch");
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    require<InvalidArgument>(datasets[k].size() == config.n_per_task,
                             "train_sequence: dataset size differs from n_per_task");
    require<InvalidArgument>(datasets[k].features.cols() == tasks[k].dim(),
                             "train_sequence: dataset dimension mismatch");
  }
}

}  // namespace detail

/// Chains train_task over tasks in config.ordering; datasets[k] must belong
/// to tasks[k]. Checkpoints are kept at every task boundary.
inline Trajectory train_sequence(const ContinualConfig& config, std::span<const TaskSpec> tasks,
                                 std::span<const Dataset> datasets) {
  detail::validate_sequence(config, tasks, datasets);
  Trajectory out;
  if (auto w = step_size_warning(config, tasks)) out.warnings.push_back(*w);
  out.checkpoints.push_back({0, config.w0});
  Vector w = config.w0;
  std::int64_t step = 0;
  int position = 0;
  for (int k : config.ordering) {
    Trajectory part = train_task(w, datasets[k], config.step, config.epochs, step);
    // part.checkpoints[0] duplicates the previous boundary
    for (std::size_t c = 1; c < part.checkpoints.size(); ++c)
      out.checkpoints.push_back(std::move(part.checkpoints[c]));
    w = std::move(part.final.weights);
    step = part.final.iteration;
    ++position;
  }
  out.final.weights = std::move(w);
  out.final.iteration = step;
  out.final.task_position = position;
  return out;
}

/// Same iterates as train_sequence, returning only the final weights.
inline Vector final_weights(const ContinualConfig& config, std::span<const TaskSpec> tasks,
                            std::span<const Dataset> datasets) {
  detail::validate_sequence(config, tasks, datasets);
  Vector w = config.w0;
  for (int k : config.ordering)
    for (int e = 0; e < config.epochs; ++e)
      for (Eigen::Index r = 0; r < datasets[k].size(); ++r)
        detail::apply_row(w, datasets[k].features.row(r), datasets[k].responses[r], config.step);
  return w;
}

/// Largest Gram condition number accepted by min_norm_update.
inline constexpr double kMaxGramCondition = 1e12;

/// w_prev + X (X^T X)^{-1} (y - X^T w_prev), X is d x N with one sample per
/// column.
inline Vector min_norm_update(const Vector& w_prev, const Matrix& x, const Vector& y) {
  detail::require<InvalidArgument>(x.rows() == w_prev.size() && x.cols() == y.size(),
                                   "min_norm_update: dimension mismatch");
  detail::require<RankDeficiency>(x.cols() >= 1 && x.cols() <= x.rows(),
                                  "min_norm_update: needs 1 <= N <= d");
  const Matrix gram = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  detail::require<RankDeficiency>(lo > 0.0 && hi / lo <= kMaxGramCondition,
                                  "min_norm_update: Gram matrix is singular or ill-conditioned");
  const Vector residual = y - x.transpose() * w_prev;
  return w_prev + x * gram.ldlt().solve(residual);
}

/// Sequential min-norm interpolation over the ordered tasks, returning the
/// weights after each task (first entry is w0).
inline std::vector<Vector> min_norm_sequence(const Vector& w0, std::span<const Dataset> datasets,
                                             std::span<const int> ordering) {
  std::vector<Vector> out{w0};
  Vector w = w0;
  for (int k : ordering) {
    w = min_norm_update(w, datasets[k].features.transpose(), datasets[k].responses);
    out.push_back(w);
  }
  return out;
}

}  // namespace clf
