#pragma once

// Declarative sweeps over task orderings x data sizes x dimensions x step
// sizes, the versioned plan-file format, and deterministic CSV and
// plot-data emission.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "clf/bounds.hpp"
#include "clf/errors.hpp"
#include "clf/parallel.hpp"
#include "clf/random.hpp"
#include "clf/risk_oracle.hpp"
#include "clf/sgd_engine.hpp"
#include "clf/task_model.hpp"

namespace clf {

enum class Metric { empirical, oracle, upper, lower, vanishing };

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::empirical: return "empirical";
    case Metric::oracle: return "oracle";
    case Metric::upper: return "upper";
    case Metric::lower: return "lower";
    case Metric::vanishing: return "vanishing";
  }
  return "unknown";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  for (Metric m : {Metric::empirical, Metric::oracle, Metric::upper, Metric::lower,
                   Metric::vanishing})
    if (metric_name(m) == s) return m;
  return std::nullopt;
}

struct SweepPlan {
  std::vector<double> spectra;  // power-law exponent of each task, lambda_i = i^{-p}
  std::vector<Eigen::Index> dims;
  std::vector<Eigen::Index> data_sizes;
  std::vector<double> etas;
  std::vector<std::vector<int>> orderings;  // 1-based permutations of the tasks
  int epochs = 1;
  double sigma = 0.0;
  std::size_t reps = 200;
  std::uint64_t seed = 0;
  std::vector<Metric> outputs{Metric::empirical};
};

/// Every permutation of 1..m in lexicographic order.
inline std::vector<std::vector<int>> all_orderings(std::size_t m) {
  std::vector<int> p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = static_cast<int>(i + 1);
  std::vector<std::vector<int>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

inline void validate(const SweepPlan& plan) {
  using detail::require;
  require<InvalidArgument>(!plan.spectra.empty(), "plan: spectra is empty");
  for (double p : plan.spectra)
    require<InvalidArgument>(p > 0.0 && std::isfinite(p), "plan: spectrum exponents must be > 0");
  require<InvalidArgument>(!plan.dims.empty() && !plan.data_sizes.empty() && !plan.etas.empty() &&
                               !plan.orderings.empty() && !plan.outputs.empty(),
                           "plan: grid is empty");
  for (auto d : plan.dims) require<InvalidArgument>(d >= 1, "plan: dims must be >= 1");
  for (auto n : plan.data_sizes) require<InvalidArgument>(n >= 1, "plan: data sizes must be >= 1");
  for (double e : plan.etas)
    require<InvalidArgument>(e >= 0.0 && std::isfinite(e), "plan: step sizes must be >= 0");
  for (const auto& o : plan.orderings) {
    std::vector<int> zero_based;
    for (int k : o) zero_based.push_back(k - 1);
    require<InvalidArgument>(is_permutation_of_range(zero_based, plan.spectra.size()),
                             "plan: every ordering must be a permutation of 1..M");
  }
  require<InvalidArgument>(plan.epochs >= 1, "plan: epochs must be >= 1");
  require<InvalidArgument>(plan.sigma >= 0.0 && std::isfinite(plan.sigma), "plan: sigma must be >= 0");
  require<InvalidArgument>(plan.reps >= 2, "plan: reps must be >= 2");
}

/// Three power-law tasks (exponents 3, 2, 1), all six orderings, N = 100..950
/// step 50, d in {10, 1000}, eta in {0.01, 0.001}, sigma 0.1, five epochs.
inline SweepPlan default_paper_plan() {
  SweepPlan p;
  p.spectra = {3.0, 2.0, 1.0};
  p.dims = {10, 1000};
  for (Eigen::Index n = 100; n <= 950; n += 50) p.data_sizes.push_back(n);
  p.etas = {0.01, 0.001};
  p.orderings = {{1, 2, 3}, {2, 1, 3}, {1, 3, 2}, {3, 1, 2}, {2, 3, 1}, {3, 2, 1}};
  p.epochs = 5;
  p.sigma = 0.1;
  p.reps = 200;
  p.seed = 1;
  p.outputs = {Metric::empirical};
  return p;
}

struct SweepRow {
  std::string spectrum_set;
  Eigen::Index dim = 0;
  Eigen::Index n = 0;
  double eta = 0.0;
  int epochs = 1;
  double sigma = 0.0;
  std::string ordering;
  Metric metric = Metric::empirical;
  double value = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> std_error;
  std::uint64_t seed = 0;
  std::string status = "ok";  // "ok", "skipped: <reason>" or "error: <reason>"
};

/// %.17g: round-trips every double.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string ordering_label(std::span<const int> ordering) {
  std::string s;
  for (std::size_t i = 0; i < ordering.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(ordering[i]);
  }
  return s;
}

inline std::string spectrum_set_label(std::span<const double> exponents) {
  std::string s;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    if (i) s += '/';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", exponents[i]);
    s += buf;
  }
  return s;
}

/// Tasks of a sweep cell: shared identity basis, shared w* = 1/sqrt(d).
inline std::vector<TaskSpec> sweep_tasks(std::span<const double> exponents, Eigen::Index d,
                                         double sigma) {
  std::vector<TaskSpec> tasks;
  const Basis basis(Matrix::Identity(d, d));
  for (double p : exponents)
    tasks.push_back(make_task(make_power_law_spectrum(d, p), basis, default_w_star(d), sigma));
  return tasks;
}

/// Seed of a (dim, n) cell; every ordering and step size in the cell sees
/// the same datasets.
inline std::uint64_t cell_seed(std::uint64_t base, Eigen::Index d, Eigen::Index n) {
  return derive_seed(base, {0x63656c6cULL, static_cast<std::uint64_t>(d),
                            static_cast<std::uint64_t>(n)});
}

namespace detail {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  bool finite = true;
};

// Empirical forgetting for every (eta, ordering) of one cell, indexed
// [eta][ordering]. Replications run in parallel, reduced in index order.
inline std::vector<std::vector<Estimate>> empirical_cell(const SweepPlan& plan,
                                                         std::span<const TaskSpec> tasks,
                                                         Eigen::Index n, std::uint64_t seed,
                                                         unsigned threads) {
  const std::size_t ne = plan.etas.size(), no = plan.orderings.size();
  std::vector<double> per_rep(plan.reps * ne * no, 0.0);
  const Vector w0 = Vector::Zero(tasks.front().dim());
  parallel_for(plan.reps, threads, [&](std::size_t rep) {
    std::vector<Dataset> data;
    for (std::size_t k = 0; k < tasks.size(); ++k)
      data.push_back(sample_batch(tasks[k], n, derive_seed(seed, {rep, k}), static_cast<int>(k)));
    for (std::size_t e = 0; e < ne; ++e) {
      for (std::size_t o = 0; o < no; ++o) {
        ContinualConfig cfg;
        cfg.step = StepRule::constant(plan.etas[e]);
        cfg.n_per_task = n;
        for (int k : plan.orderings[o]) cfg.ordering.push_back(k - 1);
        cfg.w0 = w0;
        cfg.epochs = plan.epochs;
        per_rep[(rep * ne + e) * no + o] = forgetting(final_weights(cfg, tasks, data), tasks).forgetting;
      }
    }
  });
  std::vector<std::vector<Estimate>> out(ne, std::vector<Estimate>(no));
  const double r = static_cast<double>(plan.reps);
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t o = 0; o < no; ++o) {
      Estimate& est = out[e][o];
      for (std::size_t rep = 0; rep < plan.reps; ++rep) est.mean += per_rep[(rep * ne + e) * no + o];
      est.mean /= r;
      double ss = 0.0;
      for (std::size_t rep = 0; rep < plan.reps; ++rep) {
        const double dev = per_rep[(rep * ne + e) * no + o] - est.mean;
        ss += dev * dev;
      }
      est.std_error = std::sqrt(ss / (r - 1.0) / r);
      est.finite = std::isfinite(est.mean) && std::isfinite(est.std_error);
    }
  }
  return out;
}

template <class Fn>
void fill_guarded(SweepRow& row, Fn&& compute) {
  try {
    compute(row);
  } catch (const AssumptionViolation& e) {
    row.status = std::string("skipped: ") + e.what();
  } catch (const UnsupportedModel& e) {
    row.status = std::string("skipped: ") + e.what();
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
  }
  if (row.status != "ok") {
    row.value = std::numeric_limits<double>::quiet_NaN();
    row.std_error.reset();
  }
}

}  // namespace detail

/// One row per (dim, n, eta, ordering, metric). Cell failures become rows
/// with an error or skipped status; the sweep never aborts on them.
inline std::vector<SweepRow> run_sweep(const SweepPlan& plan, unsigned threads = 1) {
  validate(plan);
  const std::string spectrum_set = spectrum_set_label(plan.spectra);
  const bool want_empirical =
      std::find(plan.outputs.begin(), plan.outputs.end(), Metric::empirical) != plan.outputs.end();
  std::vector<SweepRow> rows;
  for (Eigen::Index d : plan.dims) {
    const std::vector<TaskSpec> tasks = sweep_tasks(plan.spectra, d, plan.sigma);
    for (Eigen::Index n : plan.data_sizes) {
      const std::uint64_t seed = cell_seed(plan.seed, d, n);
      std::vector<std::vector<detail::Estimate>> empirical;
      std::string empirical_error;
      if (want_empirical) {
        try {
          empirical = detail::empirical_cell(plan, tasks, n, seed, threads);
        } catch (const std::exception& e) {
          empirical_error = e.what();
        }
      }
      for (std::size_t e = 0; e < plan.etas.size(); ++e) {
        for (std::size_t o = 0; o < plan.orderings.size(); ++o) {
          ContinualConfig cfg;
          cfg.step = StepRule::constant(plan.etas[e]);
          cfg.n_per_task = n;
          for (int k : plan.orderings[o]) cfg.ordering.push_back(k - 1);
          cfg.w0 = Vector::Zero(d);
          cfg.seed = seed;
          cfg.epochs = plan.epochs;
          for (Metric metric : plan.outputs) {
            SweepRow row;
            row.spectrum_set = spectrum_set;
            row.dim = d;
            row.n = n;
            row.eta = plan.etas[e];
            row.epochs = plan.epochs;
            row.sigma = plan.sigma;
            row.ordering = ordering_label(plan.orderings[o]);
            row.metric = metric;
            row.seed = seed;
            detail::fill_guarded(row, [&](SweepRow& r) {
              switch (metric) {
                case Metric::empirical: {
                  detail::require<Error>(empirical_error.empty(), empirical_error);
                  const auto& est = empirical[e][o];
                  detail::require<Error>(est.finite, "non-finite forgetting (diverging step size)");
                  r.value = est.mean;
                  r.std_error = est.std_error;
                  break;
                }
                case Metric::oracle:
                  detail::require<UnsupportedModel>(plan.epochs == 1,
                                                    "oracle covers one-pass training only");
                  r.value = exact_expected_forgetting(cfg, tasks).forgetting;
                  break;
                case Metric::upper:
                  r.value = upper_bound(cfg, tasks).total;
                  break;
                case Metric::lower:
                  r.value = lower_bound(cfg, tasks).total;
                  break;
                case Metric::vanishing: {
                  double worst = 0.0;
                  for (const auto& p : vanishing_check(tasks, plan.etas[e], n))
                    worst = std::max(worst, p.worst_ratio());
                  r.value = worst;
                  break;
                }
              }
            });
            rows.push_back(std::move(row));
          }
        }
      }
    }
  }
  return rows;
}

inline constexpr std::string_view kCsvHeader =
    "spectrum_set,dim,n,eta,epochs,sigma,ordering,metric,value,std_error,seed,status";

namespace detail {

inline auto row_key(const SweepRow& r) {
  return std::make_tuple(std::cref(r.spectrum_set), r.dim, r.n, r.eta, r.epochs, r.sigma,
                         std::cref(r.ordering), metric_name(r.metric));
}

inline std::vector<SweepRow> canonical_order(std::span<const SweepRow> rows) {
  std::vector<SweepRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SweepRow& a, const SweepRow& b) { return row_key(a) < row_key(b); });
  return sorted;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require<IoError>(out.good(), "cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  require<IoError>(out.good(), "failed writing " + path.string());
}

}  // namespace detail

/// CSV text in canonical row order (grid coordinates, ordering, metric).
inline std::string format_csv(std::span<const SweepRow> rows) {
  detail::require<InvalidArgument>(!rows.empty(), "emit_csv: no rows");
  std::string out(kCsvHeader);
  out += '\n';
  for (const SweepRow& r : detail::canonical_order(rows)) {
    const bool ok = r.status == "ok";
    out += detail::csv_field(r.spectrum_set) + ',' + std::to_string(r.dim) + ',' +
           std::to_string(r.n) + ',' + format_real(r.eta) + ',' + std::to_string(r.epochs) + ',' +
           format_real(r.sigma) + ',' + detail::csv_field(r.ordering) + ',' +
           std::string(metric_name(r.metric)) + ',' + (ok ? format_real(r.value) : "") + ',' +
           (ok && r.std_error ? format_real(*r.std_error) : "") + ',' + std::to_string(r.seed) +
           ',' + detail::csv_field(r.status) + '\n';
  }
  return out;
}

inline void emit_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  detail::write_file(path, format_csv(rows));
}

/// One whitespace-delimited series file per (dim, eta, epochs, sigma,
/// ordering) with lines "n value std_error" in increasing n, plus
/// <metric>_index.tsv listing every series. Returns the files written.
inline std::vector<std::filesystem::path> emit_plot_data(std::span<const SweepRow> rows,
                                                         Metric metric,
                                                         const std::filesystem::path& dir) {
  using Key = std::tuple<std::string, Eigen::Index, double, int, double, std::string>;
  std::map<Key, std::vector<const SweepRow*>> groups;
  for (const SweepRow& r : rows)
    if (r.metric == metric && r.status == "ok")
      groups[{r.spectrum_set, r.dim, r.eta, r.epochs, r.sigma, r.ordering}].push_back(&r);
  detail::require<InvalidArgument>(!groups.empty(), "emit_plot_data: rows contain no '" +
                                                        std::string(metric_name(metric)) +
                                                        "' values");
  std::filesystem::create_directories(dir);
  const std::string m(metric_name(metric));
  std::vector<std::filesystem::path> written;
  std::string index = "file\tspectrum_set\tdim\teta\tepochs\tsigma\tordering\n";
  std::set<std::string> names;
  for (auto& [key, series] : groups) {
    const auto& [spectra, dim, eta, epochs, sigma, ordering] = key;
    std::sort(series.begin(), series.end(),
              [](const SweepRow* a, const SweepRow* b) { return a->n < b->n; });
    for (std::size_t i = 1; i < series.size(); ++i)
      detail::require<InvalidArgument>(series[i]->n > series[i - 1]->n,
                                       "emit_plot_data: duplicate x value in a series");
    char eta_buf[32], sigma_buf[32];
    std::snprintf(eta_buf, sizeof eta_buf, "%g", eta);
    std::snprintf(sigma_buf, sizeof sigma_buf, "%g", sigma);
    std::string name = m + "_d" + std::to_string(dim) + "_eta" + eta_buf + "_ep" +
                       std::to_string(epochs) + "_s" + sigma_buf + "_o" + ordering;
    if (!names.insert(name).second) name += "_" + std::to_string(names.size());
    name += ".dat";
    std::string body = "# n " + m + " std_error\n";
    for (const SweepRow* r : series)
      body += std::to_string(r->n) + ' ' + format_real(r->value) + ' ' +
              (r->std_error ? format_real(*r->std_error) : "nan") + '\n';
    detail::write_file(dir / name, body);
    written.push_back(dir / name);
    index += name + '\t' + spectra + '\t' + std::to_string(dim) + '\t' + format_real(eta) + '\t' +
             std::to_string(epochs) + '\t' + format_real(sigma) + '\t' + ordering + '\n';
  }
  detail::write_file(dir / (m + "_index.tsv"), index);
  written.push_back(dir / (m + "_index.tsv"));
  return written;
}

/// Parse failure in a plan or config file, with its 1-based line number
/// (0 when the problem is a missing key).
class PlanError : public InvalidArgument {
public:
  PlanError(std::size_t line, const std::string& field, const std::string& message)
      : InvalidArgument(line ? "line " + std::to_string(line) + ", field '" + field + "': " + message
                             : "field '" + field + "': " + message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

namespace detail {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Reads `key = value` lines, '#' starts a comment. Requires version = 1 and
// rejects keys outside `allowed` and repeated keys.
inline std::map<std::string, Entry> read_key_values(std::istream& in,
                                                    const std::set<std::string>& allowed) {
  std::map<std::string, Entry> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw PlanError(line, std::string(s), "expected 'key = value'");
    const std::string key(trim(s.substr(0, eq)));
    const std::string value(trim(s.substr(eq + 1)));
    if (key.empty()) throw PlanError(line, key, "empty key");
    if (key != "version" && !allowed.count(key)) throw PlanError(line, key, "unknown key");
    if (value.empty()) throw PlanError(line, key, "empty value");
    if (out.count(key)) throw PlanError(line, key, "duplicate key");
    out[key] = {value, line};
  }
  auto v = out.find("version");
  if (v == out.end()) throw PlanError(0, "version", "missing (expected 'version = 1')");
  if (v->second.value != "1") throw PlanError(v->second.line, "version", "unsupported version");
  return out;
}

template <class T>
T parse_number(std::string_view s, std::size_t line, const std::string& field) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw PlanError(line, field, "not a valid number: '" + std::string(s) + "'");
  return v;
}

// Integers with a:b:step ranges (inclusive of b when reached).
inline std::vector<Eigen::Index> parse_int_list(const Entry& e, const std::string& field) {
  std::vector<Eigen::Index> out;
  for (std::string_view item : split(e.value, ',')) {
    if (item.find(':') != std::string_view::npos) {
      const auto parts = split(item, ':');
      if (parts.size() != 3) throw PlanError(e.line, field, "ranges are written start:stop:step");
      const auto a = parse_number<long long>(parts[0], e.line, field);
      const auto b = parse_number<long long>(parts[1], e.line, field);
      const auto step = parse_number<long long>(parts[2], e.line, field);
      if (step <= 0 || b < a) throw PlanError(e.line, field, "range needs step > 0 and stop >= start");
      for (long long x = a; x <= b; x += step) out.push_back(static_cast<Eigen::Index>(x));
    } else {
      out.push_back(static_cast<Eigen::Index>(parse_number<long long>(item, e.line, field)));
    }
  }
  return out;
}

inline std::vector<double> parse_real_list(const Entry& e, const std::string& field) {
  std::vector<double> out;
  for (std::string_view item : split(e.value, ',')) out.push_back(parse_number<double>(item, e.line, field));
  return out;
}

// A 1-based permutation of 1..m written as space-separated integers.
inline std::vector<int> parse_permutation(std::string_view s, std::size_t line,
                                          const std::string& field, std::size_t m) {
  std::vector<int> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(parse_number<int>(tok, line, field));
  if (out.empty()) throw PlanError(line, field, "empty ordering");
  if (m != 0) {
    std::vector<int> zero_based;
    for (int k : out) zero_based.push_back(k - 1);
    if (!is_permutation_of_range(zero_based, m))
      throw PlanError(line, field, "not a permutation of 1.." + std::to_string(m));
  }
  return out;
}

}  // namespace detail

/// Parses a plan file:
///
///   version    = 1                     (required)
///   spectra    = 3, 2, 1               (required; power-law exponents)
///   dims       = 10, 1000              (required; integers or start:stop:step)
///   data_sizes = 100:950:50            (required)
///   etas       = 0.01, 0.001           (required)
///   orderings  = all | 1 2 3, 3 2 1    (default all)
///   epochs     = 1                     (default 1)
///   sigma      = 0.1                   (default 0)
///   reps       = 200                   (default 200)
///   seed       = 7                     (default 0)
///   outputs    = empirical, oracle, upper, lower, vanishing  (default empirical)
inline SweepPlan parse_plan(std::istream& in) {
  static const std::set<std::string> keys{"spectra", "dims",  "data_sizes", "etas",
                                          "orderings", "epochs", "sigma", "reps",
                                          "seed",    "outputs"};
  const auto kv = detail::read_key_values(in, keys);
  auto need = [&](const char* k) -> const detail::Entry& {
    auto it = kv.find(k);
    if (it == kv.end()) throw PlanError(0, k, "missing required key");
    return it->second;
  };
  SweepPlan plan;
  plan.spectra = detail::parse_real_list(need("spectra"), "spectra");
  plan.dims = detail::parse_int_list(need("dims"), "dims");
  plan.data_sizes = detail::parse_int_list(need("data_sizes"), "data_sizes");
  plan.etas = detail::parse_real_list(need("etas"), "etas");
  if (auto it = kv.find("orderings"); it != kv.end() && it->second.value != "all") {
    for (std::string_view item : detail::split(it->second.value, ','))
      plan.orderings.push_back(
          detail::parse_permutation(item, it->second.line, "orderings", plan.spectra.size()));
  } else {
    plan.orderings = all_orderings(plan.spectra.size());
  }
  if (auto it = kv.find("epochs"); it != kv.end())
    plan.epochs = detail::parse_number<int>(it->second.value, it->second.line, "epochs");
  if (auto it = kv.find("sigma"); it != kv.end())
    plan.sigma = detail::parse_number<double>(it->second.value, it->second.line, "sigma");
  if (auto it = kv.find("reps"); it != kv.end())
    plan.reps = detail::parse_number<std::size_t>(it->second.value, it->second.line, "reps");
  if (auto it = kv.find("seed"); it != kv.end())
    plan.seed = detail::parse_number<std::uint64_t>(it->second.value, it->second.line, "seed");
  if (auto it = kv.find("outputs"); it != kv.end()) {
    plan.outputs.clear();
    for (std::string_view item : detail::split(it->second.value, ',')) {
      auto m = parse_metric(item);
      if (!m) throw PlanError(it->second.line, "outputs", "unknown metric '" + std::string(item) + "'");
      plan.outputs.push_back(*m);
    }
  }
  try {
    validate(plan);
  } catch (const InvalidArgument& e) {
    throw PlanError(0, "plan", e.what());
  }
  return plan;
}

inline SweepPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require<IoError>(in.good(), "cannot read plan file " + path.string());
  return parse_plan(in);
}

/// A single bound evaluation: power-law tasks sharing the identity basis and
/// w* = 1/sqrt(d), trained once in `ordering` from w0 = 0.
struct BoundsConfig {
  std::vector<double> spectra;
  Eigen::Index dim = 0;
  Eigen::Index n = 0;
  double eta = 0.0;
  double sigma = 0.0;
  std::vector<int> ordering;  // 1-based
};

/// Keys: version = 1, spectra, dim, n, eta, sigma (default 0), ordering
/// (default 1 2 .. M).
inline BoundsConfig parse_bounds_config(std::istream& in) {
  static const std::set<std::string> keys{"spectra", "dim", "n", "eta", "sigma", "ordering"};
  const auto kv = detail::read_key_values(in, keys);
  auto need = [&](const char* k) -> const detail::Entry& {
    auto it = kv.find(k);
    if (it == kv.end()) throw PlanError(0, k, "missing required key");
    return it->second;
  };
  BoundsConfig c;
  c.spectra = detail::parse_real_list(need("spectra"), "spectra");
  const auto& dim = need("dim");
  c.dim = detail::parse_number<Eigen::Index>(dim.value, dim.line, "dim");
  const auto& n = need("n");
  c.n = detail::parse_number<Eigen::Index>(n.value, n.line, "n");
  const auto& eta = need("eta");
  c.eta = detail::parse_number<double>(eta.value, eta.line, "eta");
  if (auto it = kv.find("sigma"); it != kv.end())
    c.sigma = detail::parse_number<double>(it->second.value, it->second.line, "sigma");
  if (auto it = kv.find("ordering"); it != kv.end()) {
    c.ordering =
        detail::parse_permutation(it->second.value, it->second.line, "ordering", c.spectra.size());
  } else {
    for (std::size_t k = 1; k <= c.spectra.size(); ++k) c.ordering.push_back(static_cast<int>(k));
  }
  SweepPlan check;
  check.spectra = c.spectra;
  check.dims = {c.dim};
  check.data_sizes = {c.n};
  check.etas = {c.eta};
  check.orderings = {c.ordering};
  check.sigma = c.sigma;
  try {
    validate(check);
  } catch (const InvalidArgument& e) {
    throw PlanError(0, "config", e.what());
  }
  return c;
}

namespace detail {

inline void append_components(std::string& out, const std::string& side, const BoundComponents& b) {
  auto line = [&](const std::string& k, double v) { out += side + '.' + k + " = " + format_real(v) + '\n'; };
  line("total", b.total);
  line("variance", b.variance);
  line("bias", b.bias);
  line("bias_first", b.bias_first);
  line("bias_second", b.bias_second);
  line("bias_third", b.bias_third);
  if (side == "upper") line("bias_second_relaxed", b.bias_second_relaxed);
  for (std::size_t m = 0; m < b.variance_per_task.size(); ++m) {
    const std::string p = "task" + std::to_string(m + 1) + '.';
    line(p + "variance", b.variance_per_task[m]);
    line(p + "bias_second", b.bias_second_per_task[m]);
    line(p + "bias_third", b.bias_third_per_task[m]);
  }
}

}  // namespace detail

/// BoundReport plus the exact expected forgetting as `key = value` lines.
/// Per-task entries are indexed by training position.
inline std::string bounds_report_text(const BoundsConfig& c) {
  const std::vector<TaskSpec> tasks = sweep_tasks(c.spectra, c.dim, c.sigma);
  ContinualConfig cfg;
  cfg.step = StepRule::constant(c.eta);
  cfg.n_per_task = c.n;
  for (int k : c.ordering) cfg.ordering.push_back(k - 1);
  cfg.w0 = Vector::Zero(c.dim);
  const BoundReport report = forgetting_bounds(cfg, tasks);
  const RiskReport exact = exact_expected_forgetting(cfg, tasks);

  std::vector<TaskSpec> ordered;
  for (int k : cfg.ordering) ordered.push_back(tasks[k]);
  const SpectralSummary s = summarize(ordered, c.eta, c.n, cfg.w0);

  std::string out;
  out += "spectrum_set = " + spectrum_set_label(c.spectra) + '\n';
  out += "dim = " + std::to_string(c.dim) + '\n';
  out += "n = " + std::to_string(c.n) + '\n';
  out += "eta = " + format_real(c.eta) + '\n';
  out += "sigma = " + format_real(c.sigma) + '\n';
  out += "ordering = " + ordering_label(c.ordering) + '\n';
  out += "r_squared = " + format_real(max_fourth_moment_radius(tasks)) + '\n';
  out += "exact.forgetting = " + format_real(exact.forgetting) + '\n';
  out += "exact.bias = " + format_real(*exact.bias_part) + '\n';
  out += "exact.variance = " + format_real(*exact.variance_part) + '\n';
  detail::append_components(out, "upper", report.upper);
  detail::append_components(out, "lower", report.lower);
  for (std::size_t m = 0; m < s.per_task.size(); ++m) {
    const TaskSummary& t = s.per_task[m];
    const std::string p = "summary.task" + std::to_string(m + 1) + '.';
    out += p + "k_star = " + std::to_string(t.k_star) + '\n';
    out += p + "d1 = " + format_real(t.dims.d1) + '\n';
    out += p + "d2 = " + format_real(t.dims.d2) + '\n';
    out += p + "d3 = " + format_real(t.dims.d3) + '\n';
    out += p + "phi_upper = " + format_real(t.phi_upper) + '\n';
    out += p + "phi_lower = " + format_real(t.phi_lower) + '\n';
  }
  return out;
}

/// Runs default_paper_plan (optionally with fewer replications or a subset
/// of dimensions) and writes results.csv plus plot/ series into `dir`.
inline void write_paper_figures(const std::filesystem::path& dir, std::size_t reps,
                                std::span<const Eigen::Index> dims, unsigned threads) {
  SweepPlan plan = default_paper_plan();
  plan.reps = reps;
  if (!dims.empty()) plan.dims.assign(dims.begin(), dims.end());
  const std::vector<SweepRow> rows = run_sweep(plan, threads);
  std::filesystem::create_directories(dir);
  emit_csv(rows, dir / "results.csv");
  emit_plot_data(rows, Metric::empirical, dir / "plot");
}

}  // namespace clf
