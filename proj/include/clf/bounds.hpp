#pragma once

// Upper and lower bounds on expected forgetting of one-pass continual SGD,
// assembled from per-task spectral quantities in a shared eigenbasis:
// cut-off indices, projection products Gamma, cross-task eigenvalue sums
// Lambda, effective dimensions D1..D3 and covariance accumulations Phi.
//
// Conventions:
//   * task positions p, q, m are 1-based positions in training order;
//     eigen-indices i are 0-based, so the head {i <= k*} (1-based) is
//     {i < k*} here and the tail is everything else;
//   * H_0 = I inside the accumulation sums;
//   * every term carries the 1/2 of the excess-risk definition, so at
//     eta = 0 the upper bound equals forgetting(w0).

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "clf/errors.hpp"
#include "clf/risk_oracle.hpp"
#include "clf/sgd_engine.hpp"
#include "clf/task_model.hpp"

namespace clf {

/// Number of eigenvalues with lambda_i >= 1/(n eta); 0 when none (or eta = 0).
inline int cutoff_index(const Spectrum& spectrum, Eigen::Index n, double eta) {
  detail::require<InvalidArgument>(n >= 1, "cutoff_index: n must be >= 1");
  detail::require<InvalidArgument>(eta >= 0.0, "cutoff_index: eta must be >= 0");
  if (eta == 0.0) return 0;
  const double threshold = 1.0 / (static_cast<double>(n) * eta);
  int k = 0;
  while (k < spectrum.dim() && spectrum[k] >= threshold) ++k;
  return k;
}

namespace detail {

inline void require_positions(int p, int q, std::size_t m) {
  require<InvalidArgument>(p >= 1 && q <= static_cast<int>(m) && (q >= 0),
                           "task positions must lie in 1..M");
}

// x^{2n} without overflow in the exponent bookkeeping.
inline double pow2n(double x, Eigen::Index n) { return std::pow(x, 2.0 * static_cast<double>(n)); }

// num / denom with 0 / 0 := 0 and num / 0 := +inf.
inline double safe_ratio(double num, double denom) {
  if (num == 0.0) return 0.0;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return num / denom;
}

}  // namespace detail

/// Gamma^i_(p,q) = prod_{j=p..q} (1 - eta lambda_j^i)^{2N}; 1 when p > q.
inline double gamma_scalar(Eigen::Index i, int p, int q, std::span<const TaskSpec> tasks,
                           double eta, Eigen::Index n) {
  if (p > q) return 1.0;
  detail::require_positions(p, q, tasks.size());
  double g = 1.0;
  for (int j = p; j <= q; ++j) g *= detail::pow2n(1.0 - eta * tasks[j - 1].spectrum[i], n);
  return g;
}

/// prod_{j=p..q} (I - eta H_j)^{2N} multiplied left to right in task order.
inline Matrix gamma_matrix(int p, int q, std::span<const TaskSpec> tasks, double eta,
                           Eigen::Index n) {
  detail::require<InvalidArgument>(!tasks.empty(), "gamma_matrix: no tasks");
  const Eigen::Index d = tasks.front().dim();
  Matrix g = Matrix::Identity(d, d);
  if (p > q) return g;
  detail::require_positions(p, q, tasks.size());
  for (int j = p; j <= q; ++j) {
    const Matrix step = Matrix::Identity(d, d) - eta * covariance_matrix(tasks[j - 1]);
    Matrix power = Matrix::Identity(d, d);
    Matrix base = step;
    for (auto e = static_cast<std::uint64_t>(2 * n); e > 0; e >>= 1) {
      if (e & 1U) power = power * base;
      base = base * base;
    }
    g = g * power;
  }
  return g;
}

/// Lambda^i = sum over tasks of the i-th eigenvalue.
inline double lambda_sum(Eigen::Index i, std::span<const TaskSpec> tasks) {
  double s = 0.0;
  for (const auto& t : tasks) {
    detail::require<InvalidArgument>(i >= 0 && i < t.dim(), "lambda_sum: index out of range");
    s += t.spectrum[i];
  }
  return s;
}

struct EffectiveDims {
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;
};

namespace detail {

// Head weight 1, tail weight N eta lambda_m^i.
inline double head_tail_weight(Eigen::Index i, int k_star, double lambda, double eta,
                               Eigen::Index n) {
  return i < k_star ? 1.0 : static_cast<double>(n) * eta * lambda;
}

}  // namespace detail

/// D1 = sum_i Gamma^i_(m+1,M) Lambda^i u_i, D2 = sum_i Gamma^i_(1,M) lambda_i^2
/// Lambda^i u_i, D3 = sum_i Gamma^i_(m,M) lambda_i Lambda^i u_i, where u_i is
/// 1 on the head of task m and N eta lambda_i on its tail.
inline EffectiveDims effective_dims(int m, std::span<const TaskSpec> tasks, double eta,
                                    Eigen::Index n) {
  detail::require_positions(m, m, tasks.size());
  const int big_m = static_cast<int>(tasks.size());
  const TaskSpec& task = tasks[m - 1];
  const int k_star = cutoff_index(task.spectrum, n, eta);
  EffectiveDims out;
  for (Eigen::Index i = 0; i < task.dim(); ++i) {
    const double lam = task.spectrum[i];
    const double big_lam = lambda_sum(i, tasks);
    const double u = detail::head_tail_weight(i, k_star, lam, eta, n);
    out.d1 += gamma_scalar(i, m + 1, big_m, tasks, eta, n) * big_lam * u;
    out.d2 += gamma_scalar(i, 1, big_m, tasks, eta, n) * lam * lam * big_lam * u;
    out.d3 += gamma_scalar(i, m, big_m, tasks, eta, n) * lam * big_lam * u;
  }
  return out;
}

namespace detail {

// <H_a, H_b> in the shared basis, with position 0 standing for H_0 = I.
inline double spectral_inner(int a, int b, std::span<const TaskSpec> tasks) {
  const Eigen::Index d = tasks.front().dim();
  const Vector ones = Vector::Ones(d);
  const Vector& la = a == 0 ? ones : tasks[a - 1].spectrum.values();
  const Vector& lb = b == 0 ? ones : tasks[b - 1].spectrum.values();
  return la.dot(lb);
}

// sum_{j=1}^{m-1} [prod_{k=1}^{j} c_k <H_{k-1}, I - (I - eta H_{m-1})^{e}>]
//   * step^j * <H_j, H_m>
template <class Constant>
double accumulation(int m, std::span<const TaskSpec> tasks, double eta, double step,
                    Eigen::Index exponent, Constant constant) {
  require_positions(m, m, tasks.size());
  if (m <= 1) return 0.0;
  const Vector& prev = tasks[m - 2].spectrum.values();
  Vector contraction(prev.size());
  for (Eigen::Index i = 0; i < prev.size(); ++i)
    contraction[i] = 1.0 - std::pow(1.0 - eta * prev[i], static_cast<double>(exponent));
  double total = 0.0;
  double product = 1.0;
  double step_power = 1.0;
  for (int j = 1; j <= m - 1; ++j) {
    const int k = j;  // the product over k = 1..j grows by one factor per j
    const double inner =
        k == 1 ? contraction.sum() : tasks[k - 2].spectrum.values().dot(contraction);
    product *= constant(tasks[k - 1]) * inner;
    step_power *= step;
    total += product * step_power * spectral_inner(j, m, tasks);
  }
  return total;
}

}  // namespace detail

/// Upper-bound accumulation Phi_1^{m-1} (alpha constants, eta^j, exponent N).
inline double phi_upper(int m, std::span<const TaskSpec> tasks, double eta, Eigen::Index n) {
  return detail::accumulation(m, tasks, eta, eta, n,
                              [](const TaskSpec& t) { return t.alpha; });
}

/// Lower-bound accumulation (beta constants, (eta/2)^j, exponent 2N).
inline double phi_lower(int m, std::span<const TaskSpec> tasks, double eta, Eigen::Index n) {
  return detail::accumulation(m, tasks, eta, 0.5 * eta, 2 * n,
                              [](const TaskSpec& t) { return t.beta; });
}

struct TaskSummary {
  int k_star = 0;
  EffectiveDims dims;
  double phi_upper = 0.0;
  double phi_lower = 0.0;
  Vector u_diag;       // diagonal of U_{k*} in the shared basis
  Vector gamma_after;  // Gamma^i_(m+1,M)
  Vector gamma_from;   // Gamma^i_(m,M)
  double tr_b0n = 0.0;          // sum_i (1 - (1 - eta lambda_i)^{2N}) omega_i^2
  double u_norm_sq = 0.0;       // ||w0 - w*||^2_U
};

/// Everything the bound formulas need, per task in training order.
struct SpectralSummary {
  std::vector<TaskSummary> per_task;
  Vector lambda_sum;  // Lambda^i
  Vector gamma_all;   // Gamma^i_(1,M)
  Vector omega;       // coordinates of w0 - w* in the shared basis
  double eta = 0.0;
  Eigen::Index n = 0;
};

namespace detail {

inline void require_bound_model(std::span<const TaskSpec> tasks) {
  require<InvalidArgument>(!tasks.empty(), "bounds: no tasks");
  require<UnsupportedModel>(same_basis(tasks), "bounds need a shared eigenbasis across tasks");
  require<UnsupportedModel>(same_optimum(tasks), "bounds need a shared w* across tasks");
}

}  // namespace detail

/// Tasks must already be in training order.
inline SpectralSummary summarize(std::span<const TaskSpec> tasks, double eta, Eigen::Index n,
                                 const Vector& w0) {
  detail::require_bound_model(tasks);
  detail::require<InvalidArgument>(w0.size() == tasks.front().dim(), "summarize: w0 dimension");
  const int big_m = static_cast<int>(tasks.size());
  const Eigen::Index d = tasks.front().dim();
  SpectralSummary s;
  s.eta = eta;
  s.n = n;
  const Vector diff = w0 - tasks.front().w_star;
  s.omega = tasks.front().basis.is_identity()
                ? diff
                : Vector(tasks.front().basis.vectors().transpose() * diff);
  s.lambda_sum.resize(d);
  s.gamma_all.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    s.lambda_sum[i] = lambda_sum(i, tasks);
    s.gamma_all[i] = gamma_scalar(i, 1, big_m, tasks, eta, n);
  }
  for (int m = 1; m <= big_m; ++m) {
    const TaskSpec& t = tasks[m - 1];
    TaskSummary ts;
    ts.k_star = cutoff_index(t.spectrum, n, eta);
    ts.dims = effective_dims(m, tasks, eta, n);
    ts.phi_upper = phi_upper(m, tasks, eta, n);
    ts.phi_lower = phi_lower(m, tasks, eta, n);
    ts.u_diag.resize(d);
    ts.gamma_after.resize(d);
    ts.gamma_from.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double lam = t.spectrum[i];
      ts.u_diag[i] = detail::head_tail_weight(i, ts.k_star, lam, eta, n);
      ts.gamma_after[i] = gamma_scalar(i, m + 1, big_m, tasks, eta, n);
      ts.gamma_from[i] = gamma_scalar(i, m, big_m, tasks, eta, n);
      const double w2 = s.omega[i] * s.omega[i];
      ts.tr_b0n += (1.0 - detail::pow2n(1.0 - eta * lam, n)) * w2;
      ts.u_norm_sq += ts.u_diag[i] * w2;
    }
    s.per_task.push_back(std::move(ts));
  }
  return s;
}

/// One side (upper or lower) of the forgetting bound.
struct BoundComponents {
  double variance = 0.0;
  double bias = 0.0;
  double total = 0.0;
  double bias_first = 0.0;   // ||w0 - w*||^2 under Gamma_1^M H_k, averaged over k
  double bias_second = 0.0;  // effective-dimension term
  double bias_third = 0.0;   // weighted-norm term
  /// Upper side only: the second bias term with tr(B_{0,N}) relaxed to
  /// 2 ||w0 - w*||^2_U. Reported, not included in the total.
  double bias_second_relaxed = 0.0;
  std::vector<double> variance_per_task;
  std::vector<double> bias_second_per_task;
  std::vector<double> bias_third_per_task;
};

struct BoundReport {
  BoundComponents upper;
  BoundComponents lower;
};

namespace detail {

inline std::vector<TaskSpec> ordered_tasks(const ContinualConfig& config,
                                           std::span<const TaskSpec> tasks) {
  require<InvalidArgument>(is_permutation_of_range(config.ordering, tasks.size()),
                           "bounds: ordering is not a permutation of the tasks");
  std::vector<TaskSpec> out;
  out.reserve(tasks.size());
  for (int k : config.ordering) out.push_back(tasks[k]);
  return out;
}

inline void require_bound_preconditions(const ContinualConfig& config,
                                        std::span<const TaskSpec> tasks) {
  require<UnsupportedModel>(!config.step.is_adaptive(), "bounds need a constant step size");
  require<UnsupportedModel>(config.epochs == 1, "bounds cover one-pass training only");
  require<InvalidArgument>(config.n_per_task >= 1, "bounds: n_per_task must be >= 1");
  require_bound_model(tasks);
  const double r2 = max_fourth_moment_radius(tasks);
  require<AssumptionViolation>(config.step.eta() * r2 <= 1.0 + 1e-12,
                               "step size exceeds 1/R^2 = 1/max(alpha tr H)");
}

inline double first_bias_term(const SpectralSummary& s, std::size_t m) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < s.omega.size(); ++i)
    v += s.gamma_all[i] * s.lambda_sum[i] * s.omega[i] * s.omega[i];
  return 0.5 * v / static_cast<double>(m);
}

inline void finish(BoundComponents& b) {
  b.bias = b.bias_first + b.bias_second + b.bias_third;
  b.total = b.variance + b.bias;
}

}  // namespace detail

/// Upper bound on expected forgetting for one-pass constant-step SGD.
/// Throws AssumptionViolation when eta > 1/R^2.
inline BoundComponents upper_bound(const ContinualConfig& config, std::span<const TaskSpec> tasks) {
  detail::require_bound_preconditions(config, tasks);
  const std::vector<TaskSpec> seq = detail::ordered_tasks(config, tasks);
  const double eta = config.step.eta();
  const Eigen::Index n = config.n_per_task;
  const SpectralSummary s = summarize(seq, eta, n, config.w0);
  const double big_m = static_cast<double>(seq.size());
  const double r2 = max_fourth_moment_radius(seq);

  BoundComponents b;
  b.bias_first = detail::first_bias_term(s, seq.size());
  for (std::size_t m = 0; m < seq.size(); ++m) {
    const TaskSpec& t = seq[m];
    const TaskSummary& ts = s.per_task[m];
    const double sigma2 = t.sigma * t.sigma;

    const double var = detail::safe_ratio(eta * sigma2 * ts.dims.d1, 1.0 - eta * r2);
    b.variance_per_task.push_back(0.5 * var / big_m);

    const double denom = 1.0 - eta * t.alpha * t.spectrum.trace();
    const double dims = ts.dims.d2 + ts.phi_upper * ts.dims.d3;
    const double second = detail::safe_ratio(t.alpha * eta * eta * dims * ts.tr_b0n, denom);
    const double relaxed =
        detail::safe_ratio(2.0 * t.alpha * eta * eta * dims * ts.u_norm_sq, denom);
    b.bias_second_per_task.push_back(0.5 * second / big_m);
    b.bias_second_relaxed += 0.5 * relaxed / big_m;

    double third = 0.0;
    for (Eigen::Index i = 0; i < s.omega.size(); ++i)
      third += s.gamma_all[i] * s.lambda_sum[i] * (t.spectrum[i] + ts.phi_upper) *
               ts.u_diag[i] * s.omega[i] * s.omega[i];
    b.bias_third_per_task.push_back(0.5 * t.alpha * eta * third / big_m);
  }
  for (double v : b.variance_per_task) b.variance += v;
  for (double v : b.bias_second_per_task) b.bias_second += v;
  for (double v : b.bias_third_per_task) b.bias_third += v;
  detail::finish(b);
  return b;
}

/// Lower bound on expected forgetting for one-pass constant-step SGD.
inline BoundComponents lower_bound(const ContinualConfig& config, std::span<const TaskSpec> tasks) {
  detail::require_bound_preconditions(config, tasks);
  const std::vector<TaskSpec> seq = detail::ordered_tasks(config, tasks);
  const double eta = config.step.eta();
  const Eigen::Index n = config.n_per_task;
  const SpectralSummary s = summarize(seq, eta, n, config.w0);
  const double big_m = static_cast<double>(seq.size());

  BoundComponents b;
  b.bias_first = detail::first_bias_term(s, seq.size());
  for (std::size_t m = 0; m < seq.size(); ++m) {
    const TaskSpec& t = seq[m];
    const TaskSummary& ts = s.per_task[m];
    const double sigma2 = t.sigma * t.sigma;

    b.variance_per_task.push_back(0.5 * (9.0 * eta * eta * sigma2 / 20.0) * ts.dims.d1 / big_m);

    const double dims = ts.dims.d2 + ts.phi_lower * ts.dims.d3;
    const double second = t.beta * t.beta * eta * eta / 25.0 * dims * ts.u_norm_sq;
    b.bias_second_per_task.push_back(0.5 * second / big_m);

    double third = 0.0;
    for (Eigen::Index i = 0; i < s.omega.size(); ++i) {
      const double lam = t.spectrum[i];
      third += detail::pow2n(1.0 - eta * lam, n) * s.gamma_all[i] * s.lambda_sum[i] *
               (lam + ts.phi_lower) * ts.u_diag[i] * s.omega[i] * s.omega[i];
    }
    b.bias_third_per_task.push_back(0.5 * t.beta * eta * eta / 5.0 * third / big_m);
  }
  for (double v : b.variance_per_task) b.variance += v;
  for (double v : b.bias_second_per_task) b.bias_second += v;
  for (double v : b.bias_third_per_task) b.bias_third += v;
  detail::finish(b);
  return b;
}

inline BoundReport forgetting_bounds(const ContinualConfig& config,
                                     std::span<const TaskSpec> tasks) {
  return {upper_bound(config, tasks), lower_bound(config, tasks)};
}

/// Finite-N diagnostic of the vanishing-bound conditions for one ordered
/// task pair (m, m~): head sums over i <= k_max, tail sums over i > k_min.
struct PairDiagnostic {
  int m = 0;        // 1-based training position
  int m_tilde = 0;  // 1-based training position
  int k_min = 0;
  int k_max = 0;
  std::array<double, 3> head_sums{};    // lam~, lam lam~, lam^2 lam~
  std::array<double, 3> head_ratios{};  // head_sums / N
  std::array<double, 3> tail_sums{};    // lam lam~, lam^2 lam~, lam^3 lam~
  std::array<double, 3> tail_ratios{};  // tail_sums * N

  double worst_ratio() const {
    double w = 0.0;
    for (double v : head_ratios) w = std::max(w, v);
    for (double v : tail_ratios) w = std::max(w, v);
    return w;
  }
};

/// Diagnostics for every ordered pair of tasks, including m = m~.
inline std::vector<PairDiagnostic> vanishing_check(std::span<const TaskSpec> tasks, double eta,
                                                   Eigen::Index n) {
  detail::require<InvalidArgument>(!tasks.empty(), "vanishing_check: no tasks");
  const auto big_m = static_cast<int>(tasks.size());
  std::vector<int> ks;
  for (const auto& t : tasks) ks.push_back(cutoff_index(t.spectrum, n, eta));
  const double nn = static_cast<double>(n);
  std::vector<PairDiagnostic> out;
  for (int m = 1; m <= big_m; ++m) {
    for (int mt = 1; mt <= big_m; ++mt) {
      PairDiagnostic p;
      p.m = m;
      p.m_tilde = mt;
      p.k_min = std::min(ks[m - 1], ks[mt - 1]);
      p.k_max = std::max(ks[m - 1], ks[mt - 1]);
      const Vector& lam = tasks[m - 1].spectrum.values();
      const Vector& lt = tasks[mt - 1].spectrum.values();
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (i < p.k_max) {
          p.head_sums[0] += lt[i];
          p.head_sums[1] += lam[i] * lt[i];
          p.head_sums[2] += lam[i] * lam[i] * lt[i];
        }
        if (i >= p.k_min) {
          p.tail_sums[0] += lam[i] * lt[i];
          p.tail_sums[1] += lam[i] * lam[i] * lt[i];
          p.tail_sums[2] += lam[i] * lam[i] * lam[i] * lt[i];
        }
      }
      for (int c = 0; c < 3; ++c) {
        p.head_ratios[c] = p.head_sums[c] / nn;
        p.tail_ratios[c] = p.tail_sums[c] * nn;
      }
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace clf
