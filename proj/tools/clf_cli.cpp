// Command-line front end: plan sweeps, figure data, verification suites and
// single bound reports.
//
// Exit status: 0 success, 1 verification failure, 2 usage error, malformed
// input or unwritable output.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "clf/experiments.hpp"
#include "clf/parallel.hpp"
#include "clf/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kUsage = 2;

void print_suite(const clf::SuiteResult& r) {
  std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.summary.c_str());
  for (const auto& n : r.notes) std::printf("    %s\n", n.c_str());
}

int run_sweep_command(const std::string& plan_path, const std::filesystem::path& out,
                      unsigned threads) {
  const clf::SweepPlan plan = clf::load_plan(plan_path);
  const auto rows = clf::run_sweep(plan, threads);
  std::filesystem::create_directories(out);
  clf::emit_csv(rows, out / "results.csv");
  std::size_t not_ok = 0;
  for (const auto& r : rows) not_ok += r.status != "ok";
  for (clf::Metric m : plan.outputs) {
    const bool any = std::any_of(rows.begin(), rows.end(), [&](const clf::SweepRow& r) {
      return r.metric == m && r.status == "ok";
    });
    if (any) clf::emit_plot_data(rows, m, out / "plot");
  }
  std::printf("wrote %zu rows (%zu skipped or failed) to %s\n", rows.size(), not_ok,
              (out / "results.csv").string().c_str());
  return kOk;
}

int run_verify_command(const std::string& suite, std::size_t trials, std::uint64_t seed,
                       std::size_t reps, unsigned threads) {
  std::vector<clf::SuiteResult> results;
  if (suite == "sandwich") results.push_back(clf::sandwich_suite(trials, seed));
  else if (suite == "oracle") results.push_back(clf::oracle_suite(trials, seed, reps, threads));
  else results = clf::properties_suite(trials, seed);
  bool ok = true;
  for (const auto& r : results) {
    print_suite(r);
    ok = ok && r.passed;
  }
  return ok ? kOk : kVerificationFailed;
}

int run_bounds_command(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw clf::IoError("cannot read config file " + path);
  std::fputs(clf::bounds_report_text(clf::parse_bounds_config(in)).c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forgetting of continual linear regression under SGD: sweeps, bounds, checks"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = clf::default_thread_count();
  app.add_option("--threads", threads, "Worker threads (default: CLF_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Run a plan file and write CSV and plot data");
  std::string plan_path, out_dir;
  sweep->add_option("--plan", plan_path, "Plan file")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();

  auto* figures = app.add_subcommand("paper-figures", "Run the default figure plan");
  std::string figures_out;
  std::size_t figure_reps = clf::default_paper_plan().reps;
  std::vector<Eigen::Index> figure_dims;
  figures->add_option("--out", figures_out, "Output directory")->required();
  figures->add_option("--reps", figure_reps, "Monte-Carlo replications per cell")
      ->check(CLI::Range(2, 1000000));
  figures->add_option("--dims", figure_dims, "Restrict to these dimensions")
      ->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Run a randomized verification suite");
  std::string suite;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  std::size_t mc_reps = 2000;
  verify->add_option("--suite", suite, "sandwich, oracle or properties")
      ->required()
      ->check(CLI::IsMember({"sandwich", "oracle", "properties"}));
  verify->add_option("--trials", trials, "Random cases per check")->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--reps", mc_reps, "Monte-Carlo replications (oracle suite)")
      ->check(CLI::Range(2, 100000000));

  auto* bounds = app.add_subcommand("bounds", "Print upper and lower bounds for one config");
  std::string config_path;
  bounds->add_option("--config", config_path, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*sweep) return run_sweep_command(plan_path, out_dir, threads);
    if (*figures) {
      clf::write_paper_figures(figures_out, figure_reps, figure_dims, threads);
      std::printf("wrote figure data to %s\n", figures_out.c_str());
      return kOk;
    }
    if (*verify) return run_verify_command(suite, trials, seed, mc_reps, threads);
    if (*bounds) return run_bounds_command(config_path);
  } catch (const clf::PlanError& e) {
    std::fprintf(stderr, "malformed input: %s\n", e.what());
    return kUsage;
  } catch (const clf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
