// Acceptance checks, one pass/fail line per criterion.
//
//   acceptance            run every criterion
//   acceptance --only N   run criterion N
//
// Exit status is 0 only when every selected criterion passes.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clf/parallel.hpp"
#include "clf/verify.hpp"

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kTrendReps = 200;

struct Criterion {
  int id;
  const char* name;
  std::function<clf::SuiteResult()> run;
};

clf::SuiteResult combine(std::string name, const std::vector<clf::SuiteResult>& parts) {
  clf::SuiteResult r;
  r.name = std::move(name);
  r.passed = true;
  for (const auto& p : parts) {
    r.trials += p.trials;
    r.failures += p.failures;
    r.passed = r.passed && p.passed;
    if (!r.summary.empty()) r.summary += "; ";
    r.summary += p.name + " " + p.summary;
    for (const auto& n : p.notes) r.notes.push_back(p.name + ": " + n);
  }
  return r;
}

// Two runs of the figure plan into separate directories, compared byte for
// byte. Full replication count, d = 10 panels.
clf::SuiteResult determinism(unsigned threads) {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "clf_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<Eigen::Index> dims{10};
  const std::size_t reps = clf::default_paper_plan().reps;
  clf::write_paper_figures(root / "a", reps, dims, threads);
  clf::write_paper_figures(root / "b", reps, dims, threads);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) files += e.is_regular_file();
  clf::SuiteResult r;
  r.name = "determinism";
  r.trials = 1;
  r.passed = files > 1 && clf::same_tree(root / "a", root / "b");
  r.failures = r.passed ? 0 : 1;
  r.summary = std::to_string(files) + " files per run, " +
              (r.passed ? "byte-identical" : "runs differ");
  fs::remove_all(root);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc == 3 && std::string(argv[1]) == "--only") only = std::atoi(argv[2]);
  else if (argc != 1) {
    std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
    return 2;
  }
  const unsigned threads = clf::default_thread_count();

  const std::vector<Criterion> criteria{
      {1, "oracle agreement", [&] { return clf::oracle_suite(50, kSeed, 2000, threads); }},
      {2, "bound sandwich", [] { return clf::sandwich_suite(100, kSeed); }},
      {3, "fourth-moment witness",
       [] {
         return combine("fourth moment", {clf::fourth_moment_witness(10, kSeed),
                                          clf::fourth_moment_inequalities(100, kSeed)});
       }},
      {4, "min-norm equivalence", [] { return clf::min_norm_equivalence(100, kSeed); }},
      {5, "ordering trend", [&] { return clf::ordering_trend(kTrendReps, kSeed, threads); }},
      {6, "step-size trend", [&] { return clf::step_size_trend(kTrendReps, kSeed, threads); }},
      {7, "dimension trend", [&] { return clf::dimension_trend(kTrendReps, kSeed, threads); }},
      {8, "degenerate exactness", [] { return clf::degenerate_exactness(100, kSeed); }},
      {9, "determinism", [&] { return determinism(threads); }},
  };

  bool all = true, ran = false;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    ran = true;
    const auto start = std::chrono::steady_clock::now();
    clf::SuiteResult r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.summary = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d %s: %s (%.1f s)\n", r.passed ? "PASS" : "FAIL", c.id, c.name,
                r.summary.c_str(), secs);
    for (const auto& n : r.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
    all = all && r.passed;
  }
  if (!ran) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }
  return all ? 0 : 1;
}
