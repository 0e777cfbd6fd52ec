#pragma once

// Randomized verification suites: bound sandwich against the exact oracle,
// Monte-Carlo agreement of the oracle, Gaussian fourth-moment identities,
// min-norm / adaptive-step equivalence and degenerate exactness; plus the
// qualitative sweep trends (ordering, step size, dimension).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "clf/bounds.hpp"
#include "clf/experiments.hpp"
#include "clf/random.hpp"
#include "clf/risk_oracle.hpp"
#include "clf/sgd_engine.hpp"
#include "clf/task_model.hpp"

namespace clf {

struct SuiteResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t failures = 0;
  bool passed = false;
  std::string summary;
  std::vector<std::string> notes;  // first few failing cases
};

namespace detail {

inline constexpr std::size_t kMaxNotes = 5;

inline void note(SuiteResult& r, const std::string& s) {
  if (r.notes.size() < kMaxNotes) r.notes.push_back(s);
}

inline std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct RandomCase {
  std::vector<TaskSpec> tasks;
  ContinualConfig config;
};

// Shared-basis Gaussian tasks with spectra c * i^{-p}, p in [0.5, 3],
// c in [0.5, 2], a shared w* in [-1, 1]^d, w0 = 0 and eta = u / R^2 with
// u uniform in (0, 1).
inline RandomCase random_shared_case(Rng& rng, std::uint64_t seed, Eigen::Index max_d,
                                     std::size_t max_m, Eigen::Index max_n,
                                     std::span<const double> sigmas) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<Eigen::Index> dim(1, max_d), size(1, max_n);
  std::uniform_int_distribution<std::size_t> count(1, max_m), pick(0, sigmas.size() - 1);
  RandomCase c;
  const Eigen::Index d = dim(rng);
  const std::size_t m = count(rng);
  const double sigma = sigmas[pick(rng)];
  const BasisMode mode = unit(rng) < 0.5 ? BasisMode::identity : BasisMode::random_orthogonal;
  const Basis basis = sample_basis(d, mode, derive_seed(seed, {1}));
  Vector w_star(d);
  for (Eigen::Index i = 0; i < d; ++i) w_star[i] = 2.0 * unit(rng) - 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double p = 0.5 + 2.5 * unit(rng), scale = 0.5 + 1.5 * unit(rng);
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * std::pow(static_cast<double>(i + 1), -p);
    c.tasks.push_back(make_task(Spectrum(v), basis, w_star, sigma));
  }
  c.config.step = StepRule::constant(unit(rng) / max_fourth_moment_radius(c.tasks));
  c.config.n_per_task = size(rng);
  c.config.ordering = identity_ordering(m);
  std::shuffle(c.config.ordering.begin(), c.config.ordering.end(), rng);
  c.config.w0 = Vector::Zero(d);
  c.config.seed = derive_seed(seed, {2});
  return c;
}

inline std::string describe(const RandomCase& c) {
  return fmt("d=%ld M=%zu N=%ld eta*R^2=%.4g sigma=%g", static_cast<long>(c.tasks.front().dim()),
             c.tasks.size(), static_cast<long>(c.config.n_per_task),
             c.config.step.eta() * max_fourth_moment_radius(c.tasks), c.tasks.front().sigma);
}

inline Matrix random_psd(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Matrix g(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  return symmetrize(g * g.transpose() / static_cast<double>(d));
}

}  // namespace detail

/// total_lower - 1e-8 <= exact expected forgetting <= total_upper + 1e-8 on
/// random configs with d <= 20, M <= 4, N <= 200, sigma in {0, 0.1, 1}.
inline SuiteResult sandwich_suite(std::size_t trials, std::uint64_t seed) {
  constexpr double kSlack = 1e-8;
  static constexpr double sigmas[] = {0.0, 0.1, 1.0};
  SuiteResult r;
  r.name = "sandwich";
  r.trials = trials;
  std::size_t upper_fail = 0, lower_fail = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, {0x73616e64ULL, t});
    Rng rng = make_rng(s);
    const auto c = detail::random_shared_case(rng, s, 20, 4, 200, sigmas);
    const double exact = exact_expected_forgetting(c.config, c.tasks).forgetting;
    const BoundReport b = forgetting_bounds(c.config, c.tasks);
    const bool up_ok = exact <= b.upper.total + kSlack;
    const bool lo_ok = b.lower.total - kSlack <= exact;
    upper_fail += !up_ok;
    lower_fail += !lo_ok;
    if (!up_ok || !lo_ok) {
      ++r.failures;
      detail::note(r, detail::fmt("trial %zu (%s): lower=%.6g exact=%.6g upper=%.6g", t,
                                  detail::describe(c).c_str(), b.lower.total, exact, b.upper.total));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu configs sandwiched (upper violated %zu, lower violated %zu)",
                          trials - r.failures, trials, upper_fail, lower_fail);
  return r;
}

/// |Monte-Carlo - exact| <= 3 std errors in at least 95% of random configs
/// with d <= 8, M <= 3, N <= 50, sigma in {0, 0.1}.
inline SuiteResult oracle_suite(std::size_t trials, std::uint64_t seed, std::size_t reps = 2000,
                                unsigned threads = 1) {
  static constexpr double sigmas[] = {0.0, 0.1};
  SuiteResult r;
  r.name = "oracle";
  r.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, {0x6f726163ULL, t});
    Rng rng = make_rng(s);
    const auto c = detail::random_shared_case(rng, s, 8, 3, 50, sigmas);
    const double exact = exact_expected_forgetting(c.config, c.tasks).forgetting;
    const RiskReport mc = mc_expected_forgetting(c.config, c.tasks, reps, threads);
    const double gap = std::abs(mc.forgetting - exact);
    if (gap > 3.0 * *mc.std_error) {
      ++r.failures;
      detail::note(r, detail::fmt("trial %zu (%s): exact=%.6g mc=%.6g se=%.3g", t,
                                  detail::describe(c).c_str(), exact, mc.forgetting, *mc.std_error));
    }
  }
  r.passed = trials > 0 && static_cast<double>(trials - r.failures) >= 0.95 * static_cast<double>(trials);
  r.summary = detail::fmt("%zu/%zu configs within 3 standard errors (need >= 95%%)",
                          trials - r.failures, trials);
  return r;
}

/// Monte-Carlo E[(x^T A x) x x^T] with n samples matches 2HAH + tr(HA)H
/// entrywise within 3 standard errors, for `pairs` random (H, A) at d = 3.
inline SuiteResult fourth_moment_witness(std::size_t pairs, std::uint64_t seed,
                                         std::size_t samples = 1'000'000) {
  constexpr Eigen::Index d = 3;
  SuiteResult r;
  r.name = "fourth-moment witness";
  r.trials = pairs;
  for (std::size_t t = 0; t < pairs; ++t) {
    Rng rng = make_rng(derive_seed(seed, {0x666f7572ULL, t}));
    const Matrix h = detail::random_psd(rng, d) + 0.1 * Matrix::Identity(d, d);
    const Matrix a = detail::random_psd(rng, d);
    const Eigen::Matrix3d root = Eigen::LLT<Matrix>(h).matrixL();
    const Eigen::Matrix3d a3 = a;
    std::normal_distribution<double> normal;
    Eigen::Matrix3d sum = Eigen::Matrix3d::Zero(), sum_sq = Eigen::Matrix3d::Zero();
    Eigen::Vector3d g;
    for (std::size_t s = 0; s < samples; ++s) {
      for (Eigen::Index i = 0; i < d; ++i) g[i] = normal(rng);
      const Eigen::Vector3d x = root * g;
      const Eigen::Matrix3d v = x.dot(a3 * x) * (x * x.transpose());
      sum += v;
      sum_sq += v.cwiseAbs2();
    }
    const double n = static_cast<double>(samples);
    const Matrix mean = sum / n;
    const Matrix var = (sum_sq / n - mean.cwiseAbs2()) * (n / (n - 1.0));
    const Matrix expected = gaussian_fourth_operator(h, a);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i <= j; ++i)
        worst = std::max(worst, std::abs(mean(i, j) - expected(i, j)) / std::sqrt(var(i, j) / n));
    if (worst > 3.0) {
      ++r.failures;
      detail::note(r, detail::fmt("pair %zu: worst entry deviates %.3g standard errors", t, worst));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu (H, A) pairs within 3 standard errors", pairs - r.failures, pairs);
  return r;
}

/// M A <= 3 tr(HA) H and M A - HAH >= tr(HA) H for random PSD A (eigenvalue
/// checks to -1e-8).
inline SuiteResult fourth_moment_inequalities(std::size_t trials, std::uint64_t seed) {
  SuiteResult r;
  r.name = "fourth-moment inequalities";
  r.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = make_rng(derive_seed(seed, {0x696e6571ULL, t}));
    std::uniform_int_distribution<Eigen::Index> dim(1, 8);
    const Eigen::Index d = dim(rng);
    const Matrix h = detail::random_psd(rng, d);
    const Matrix a = detail::random_psd(rng, d);
    const Matrix m = gaussian_fourth_operator(h, a);
    const double tr = (h * a).trace();
    const Matrix upper_gap = detail::symmetrize(3.0 * tr * h - m);
    const Matrix lower_gap = detail::symmetrize(m - h * a * h - tr * h);
    const double lo_up = Eigen::SelfAdjointEigenSolver<Matrix>(upper_gap).eigenvalues().minCoeff();
    const double lo_lo = Eigen::SelfAdjointEigenSolver<Matrix>(lower_gap).eigenvalues().minCoeff();
    if (lo_up < -1e-8 || lo_lo < -1e-8) {
      ++r.failures;
      detail::note(r, detail::fmt("trial %zu: min eigenvalues %.3g, %.3g", t, lo_up, lo_lo));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu random PSD A satisfy both inequalities", trials - r.failures, trials);
  return r;
}

/// Adaptive-step SGD with one sample per task and the sequential min-norm
/// solution agree to 1e-10 at every task boundary (d <= 10, M <= 5).
inline SuiteResult min_norm_equivalence(std::size_t trials, std::uint64_t seed) {
  SuiteResult r;
  r.name = "min-norm equivalence";
  r.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, {0x6d6e6f72ULL, t});
    Rng rng = make_rng(s);
    std::uniform_int_distribution<Eigen::Index> dim(1, 10);
    std::uniform_int_distribution<std::size_t> count(1, 5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Eigen::Index d = dim(rng);
    const std::size_t m = count(rng);
    std::vector<TaskSpec> tasks;
    std::vector<Dataset> data;
    for (std::size_t k = 0; k < m; ++k) {
      Vector w_star(d);
      for (Eigen::Index i = 0; i < d; ++i) w_star[i] = 2.0 * unit(rng) - 1.0;
      tasks.push_back(make_task(make_power_law_spectrum(d, 0.5 + 2.0 * unit(rng)),
                                sample_basis(d, BasisMode::random_orthogonal, derive_seed(s, {k})),
                                w_star, unit(rng) < 0.5 ? 0.0 : 0.1));
      data.push_back(sample_batch(tasks.back(), 1, derive_seed(s, {k, 1}), static_cast<int>(k)));
    }
    ContinualConfig cfg;
    cfg.step = StepRule::adaptive();
    cfg.n_per_task = 1;
    cfg.ordering = identity_ordering(m);
    std::shuffle(cfg.ordering.begin(), cfg.ordering.end(), rng);
    cfg.w0 = Vector::Zero(d);
    const Trajectory sgd = train_sequence(cfg, tasks, data);
    const std::vector<Vector> mn = min_norm_sequence(cfg.w0, data, cfg.ordering);
    double worst = 0.0;
    for (std::size_t b = 0; b < mn.size(); ++b)
      worst = std::max(worst, (sgd.checkpoints[b].weights - mn[b]).cwiseAbs().maxCoeff());
    if (!(worst <= 1e-10)) {
      ++r.failures;
      detail::note(r, detail::fmt("trial %zu (d=%ld M=%zu): max deviation %.3g", t,
                                  static_cast<long>(d), m, worst));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu sequences agree to 1e-10 at every boundary", trials - r.failures,
                          trials);
  return r;
}

/// sigma = 0 and w0 = w* give 0 (<= 1e-12) for the empirical estimate, the
/// oracle and both bounds; eta = 0 gives upper = forgetting(w0) to 1e-12.
inline SuiteResult degenerate_exactness(std::size_t trials, std::uint64_t seed) {
  constexpr double kTol = 1e-12;
  static constexpr double zero_sigma[] = {0.0};
  SuiteResult r;
  r.name = "degenerate exactness";
  r.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint64_t s = derive_seed(seed, {0x64656765ULL, t});
    Rng rng = make_rng(s);
    auto c = detail::random_shared_case(rng, s, 10, 3, 50, zero_sigma);
    c.config.w0 = c.tasks.front().w_star;
    const double empirical = mc_expected_forgetting(c.config, c.tasks, 4).forgetting;
    const double oracle = exact_expected_forgetting(c.config, c.tasks).forgetting;
    const BoundReport b = forgetting_bounds(c.config, c.tasks);

    auto still = c;
    still.config.step = StepRule::constant(0.0);
    still.config.w0 = Vector::Ones(c.tasks.front().dim());
    for (auto& task : still.tasks) task.sigma = 0.5;
    const double upper0 = upper_bound(still.config, still.tasks).total;
    const double at_w0 = forgetting(still.config.w0, still.tasks).forgetting;

    const bool ok = std::abs(empirical) <= kTol && std::abs(oracle) <= kTol &&
                    std::abs(b.upper.total) <= kTol && std::abs(b.lower.total) <= kTol &&
                    std::abs(upper0 - at_w0) <= kTol;
    if (!ok) {
      ++r.failures;
      detail::note(r, detail::fmt("trial %zu (%s): empirical=%.3g oracle=%.3g upper=%.3g lower=%.3g "
                                  "eta0 gap=%.3g",
                                  t, detail::describe(c).c_str(), empirical, oracle, b.upper.total,
                                  b.lower.total, upper0 - at_w0));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu configs exact to 1e-12", trials - r.failures, trials);
  return r;
}

/// Fourth-moment witness (10 pairs) and inequalities, min-norm equivalence
/// and degenerate exactness, each with `trials` random cases.
inline std::vector<SuiteResult> properties_suite(std::size_t trials, std::uint64_t seed) {
  return {fourth_moment_witness(10, seed), fourth_moment_inequalities(trials, seed),
          min_norm_equivalence(trials, seed), degenerate_exactness(trials, seed)};
}

// ---------------------------------------------------------------------------
// Qualitative sweep trends.

namespace detail {

inline const SweepRow& find_row(std::span<const SweepRow> rows, Eigen::Index d, Eigen::Index n,
                                double eta, const std::string& ordering) {
  for (const auto& r : rows)
    if (r.dim == d && r.n == n && r.eta == eta && r.ordering == ordering &&
        r.metric == Metric::empirical)
      return r;
  throw InvalidArgument("trend check: missing row for ordering " + ordering);
}

// (hi - lo) >= 2 sqrt(se_hi^2 + se_lo^2); returns the gap in combined
// standard errors.
inline double separation(const SweepRow& hi, const SweepRow& lo) {
  const double se = std::hypot(hi.std_error.value_or(0.0), lo.std_error.value_or(0.0));
  const double gap = hi.value - lo.value;
  if (se == 0.0) return gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return gap / se;
}

inline std::string fmt_pair(const SweepRow& hi, const SweepRow& lo, double sep) {
  return fmt("d=%ld eta=%g %s: %.6g (se %.3g) vs d=%ld eta=%g %s: %.6g (se %.3g), gap %.3g SE",
             static_cast<long>(hi.dim), hi.eta, hi.ordering.c_str(), hi.value,
             hi.std_error.value_or(0.0), static_cast<long>(lo.dim), lo.eta, lo.ordering.c_str(),
             lo.value, lo.std_error.value_or(0.0), sep);
}

inline SweepPlan trend_plan(std::size_t reps, std::uint64_t seed) {
  SweepPlan p = default_paper_plan();
  p.reps = reps;
  p.seed = seed;
  return p;
}

}  // namespace detail

/// Default spectra, d = 10, eta = 0.01, N = 900, five epochs: each ordering
/// that ends with the i^{-1} task forgets more than each ordering that ends
/// with the i^{-3} task, by at least two combined standard errors.
inline SuiteResult ordering_trend(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
  SweepPlan p = detail::trend_plan(reps, seed);
  p.dims = {10};
  p.data_sizes = {900};
  p.etas = {0.01};
  const auto rows = run_sweep(p, threads);
  SuiteResult r;
  r.name = "ordering trend";
  double weakest = std::numeric_limits<double>::infinity();
  for (const auto& late : p.orderings) {
    if (late.back() != 3) continue;
    for (const auto& early : p.orderings) {
      if (early.back() != 1) continue;
      ++r.trials;
      const auto& hi = detail::find_row(rows, 10, 900, 0.01, ordering_label(late));
      const auto& lo = detail::find_row(rows, 10, 900, 0.01, ordering_label(early));
      const double sep = detail::separation(hi, lo);
      weakest = std::min(weakest, sep);
      if (!(hi.status == "ok" && lo.status == "ok" && sep >= 2.0)) {
        ++r.failures;
        detail::note(r, detail::fmt_pair(hi, lo, sep));
      }
    }
  }
  r.passed = r.trials > 0 && r.failures == 0;
  r.summary = detail::fmt("%zu/%zu ordering pairs separated, weakest gap %.3g combined SE",
                          r.trials - r.failures, r.trials, weakest);
  return r;
}

/// Same setting at N = 900, d = 10: eta = 0.001 forgets less than eta = 0.01
/// for every ordering, by at least two combined standard errors.
inline SuiteResult step_size_trend(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
  SweepPlan p = detail::trend_plan(reps, seed);
  p.dims = {10};
  p.data_sizes = {900};
  p.etas = {0.01, 0.001};
  const auto rows = run_sweep(p, threads);
  SuiteResult r;
  r.name = "step-size trend";
  double weakest = std::numeric_limits<double>::infinity();
  for (const auto& o : p.orderings) {
    ++r.trials;
    const auto& hi = detail::find_row(rows, 10, 900, 0.01, ordering_label(o));
    const auto& lo = detail::find_row(rows, 10, 900, 0.001, ordering_label(o));
    const double sep = detail::separation(hi, lo);
    weakest = std::min(weakest, sep);
    if (!(hi.status == "ok" && lo.status == "ok" && sep >= 2.0)) {
      ++r.failures;
      detail::note(r, detail::fmt_pair(hi, lo, sep));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu orderings lower at eta=0.001, weakest gap %.3g combined SE",
                          r.trials - r.failures, r.trials, weakest);
  return r;
}

/// N = 200, eta = 0.01: d = 1000 forgets more than d = 10 for every
/// ordering, by at least two combined standard errors.
inline SuiteResult dimension_trend(std::size_t reps, std::uint64_t seed, unsigned threads = 1) {
  SweepPlan p = detail::trend_plan(reps, seed);
  p.dims = {10, 1000};
  p.data_sizes = {200};
  p.etas = {0.01};
  const auto rows = run_sweep(p, threads);
  SuiteResult r;
  r.name = "dimension trend";
  double weakest = std::numeric_limits<double>::infinity();
  for (const auto& o : p.orderings) {
    ++r.trials;
    const auto& hi = detail::find_row(rows, 1000, 200, 0.01, ordering_label(o));
    const auto& lo = detail::find_row(rows, 10, 200, 0.01, ordering_label(o));
    const double sep = detail::separation(hi, lo);
    weakest = std::min(weakest, sep);
    if (!(hi.status == "ok" && lo.status == "ok" && sep >= 2.0)) {
      ++r.failures;
      detail::note(r, detail::fmt_pair(hi, lo, sep));
    }
  }
  r.passed = r.failures == 0;
  r.summary = detail::fmt("%zu/%zu orderings higher at d=1000, weakest gap %.3g combined SE",
                          r.trials - r.failures, r.trials, weakest);
  return r;
}

/// Byte-for-byte comparison of two directory trees.
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  auto listing = [](const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    return files;
  };
  const auto fa = listing(a), fb = listing(b);
  if (fa != fb) return false;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

}  // namespace clf
