#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clf/experiments.hpp"

using namespace clf;
namespace fs = std::filesystem;

namespace {

SweepPlan small_plan() {
  SweepPlan p;
  p.spectra = {3.0, 2.0, 1.0};
  p.dims = {5};
  p.data_sizes = {10, 20};
  p.etas = {0.01, 0.05};
  p.orderings = {{1, 2, 3}, {3, 2, 1}};
  p.epochs = 1;
  p.sigma = 0.1;
  p.reps = 8;
  p.seed = 3;
  p.outputs = {Metric::empirical, Metric::oracle, Metric::upper, Metric::lower, Metric::vanishing};
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("clf_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SweepPlan parse(const std::string& text) {
  std::istringstream in(text);
  return parse_plan(in);
}

std::size_t plan_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const PlanError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no PlanError for:\n" << text;
  return 0;
}

}  // namespace

TEST(DefaultFigurePlan, Grid) {
  const SweepPlan p = default_paper_plan();
  EXPECT_EQ(p.orderings.size(), 6u);
  EXPECT_EQ(p.data_sizes.size(), 18u);
  EXPECT_EQ(p.data_sizes.front(), 100);
  EXPECT_EQ(p.data_sizes.back(), 950);
  EXPECT_EQ(p.epochs, 5);
  EXPECT_EQ(p.sigma, 0.1);
  const auto tasks = sweep_tasks(p.spectra, 10, p.sigma);
  EXPECT_DOUBLE_EQ(tasks[0].spectrum[1], 0.125);
  EXPECT_DOUBLE_EQ(tasks[1].spectrum[1], 0.25);
  EXPECT_DOUBLE_EQ(tasks[2].spectrum[1], 0.5);
  EXPECT_NO_THROW(validate(p));
}

TEST(AllOrderings, LexicographicPermutations) {
  const auto o = all_orderings(3);
  ASSERT_EQ(o.size(), 6u);
  EXPECT_EQ(o.front(), (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(o.back(), (std::vector<int>{3, 2, 1}));
  EXPECT_EQ(all_orderings(1).size(), 1u);
}

TEST(RunSweep, RowsAreExhaustive) {
  const SweepPlan p = small_plan();
  const auto rows = run_sweep(p);
  EXPECT_EQ(rows.size(), p.dims.size() * p.data_sizes.size() * p.etas.size() * p.orderings.size() *
                             p.outputs.size());
  for (const auto& r : rows) EXPECT_EQ(r.status, "ok") << metric_name(r.metric);
}

TEST(RunSweep, ZeroStepGivesInitialForgetting) {
  SweepPlan p = small_plan();
  p.etas = {0.0};
  p.outputs = {Metric::empirical};
  const auto tasks = sweep_tasks(p.spectra, 5, p.sigma);
  const double f0 = forgetting(Vector::Zero(5), tasks).forgetting;
  for (const auto& r : run_sweep(p)) {
    EXPECT_EQ(r.value, f0);
    EXPECT_EQ(*r.std_error, 0.0);
  }
}

TEST(RunSweep, DeterministicAndThreadInvariant) {
  const SweepPlan p = small_plan();
  const std::string a = format_csv(run_sweep(p, 1));
  EXPECT_EQ(a, format_csv(run_sweep(p, 1)));
  EXPECT_EQ(a, format_csv(run_sweep(p, 3)));
}

TEST(RunSweep, CommonDataAcrossStepSizes) {
  SweepPlan p = small_plan();
  p.outputs = {Metric::empirical};
  const auto rows = run_sweep(p);
  for (const auto& r : rows) EXPECT_EQ(r.seed, cell_seed(p.seed, r.dim, r.n));
}

TEST(RunSweep, MarksUnsupportedCellsAsSkipped) {
  SweepPlan p = small_plan();
  p.epochs = 2;
  p.etas = {1e6};
  p.data_sizes = {10};
  p.orderings = {{1, 2, 3}};
  const auto rows = run_sweep(p);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    switch (r.metric) {
      case Metric::empirical:
        EXPECT_EQ(r.status.rfind("error: ", 0), 0u) << r.status;
        break;
      case Metric::vanishing:
        EXPECT_EQ(r.status, "ok");
        break;
      default:
        EXPECT_EQ(r.status.rfind("skipped: ", 0), 0u) << r.status;
    }
  }
  const std::string csv = format_csv(rows);
  EXPECT_NE(csv.find(",empirical,,,"), std::string::npos);
}

TEST(RunSweep, AgreesWithOracleOnOnePassCell) {
  SweepPlan p = small_plan();
  p.reps = 400;
  p.data_sizes = {20};
  p.etas = {0.05};
  p.outputs = {Metric::empirical, Metric::oracle};
  const auto rows = run_sweep(p, 2);
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    ASSERT_EQ(rows[i].metric, Metric::empirical);
    EXPECT_LE(std::abs(rows[i].value - rows[i + 1].value), 3.0 * *rows[i].std_error);
  }
}

TEST(FormatCsv, HeaderAndSingleRow) {
  SweepRow r;
  r.spectrum_set = "3/2/1";
  r.dim = 10;
  r.n = 100;
  r.eta = 0.01;
  r.ordering = "1-2-3";
  r.value = 0.1;
  r.std_error = 0.25;
  r.seed = 9;
  const std::vector<SweepRow> rows{r};
  EXPECT_EQ(format_csv(rows),
            std::string(kCsvHeader) +
                "\n3/2/1,10,100,0.01,1,0,1-2-3,empirical,0.10000000000000001,0.25,9,ok\n");
  EXPECT_THROW(format_csv(std::span<const SweepRow>{}), InvalidArgument);
}

TEST(FormatCsv, ValuesRoundTrip) {
  SweepRow r;
  r.value = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_real(r.value)), r.value);
  EXPECT_EQ(std::stod(format_real(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(FormatCsv, CanonicalOrderIndependentOfInputOrder) {
  auto rows = run_sweep(small_plan());
  const std::string a = format_csv(rows);
  std::reverse(rows.begin(), rows.end());
  EXPECT_EQ(format_csv(rows), a);
}

TEST(FormatCsv, QuotesStatusWithCommas) {
  SweepRow r;
  r.status = "error: a, b";
  const std::vector<SweepRow> rows{r};
  EXPECT_NE(format_csv(rows).find("\"error: a, b\""), std::string::npos);
}

TEST(EmitCsv, WritesFileAndRejectsUnwritablePath) {
  TempDir dir;
  const auto rows = run_sweep(small_plan());
  emit_csv(rows, dir.path / "a.csv");
  emit_csv(rows, dir.path / "b.csv");
  EXPECT_EQ(slurp(dir.path / "a.csv"), slurp(dir.path / "b.csv"));
  EXPECT_EQ(slurp(dir.path / "a.csv"), format_csv(rows));
  EXPECT_THROW(emit_csv(rows, dir.path / "missing" / "x.csv"), IoError);
}

TEST(EmitPlotData, OneSeriesPerOrderingWithIncreasingX) {
  TempDir dir;
  SweepPlan p = small_plan();
  p.orderings = all_orderings(3);
  p.etas = {0.01};
  p.data_sizes = {30, 10, 20};
  p.outputs = {Metric::empirical};
  const auto files = emit_plot_data(run_sweep(p), Metric::empirical, dir.path);
  ASSERT_EQ(files.size(), 7u);
  EXPECT_EQ(files.back().filename(), "empirical_index.tsv");
  std::string index = slurp(files.back());
  EXPECT_EQ(std::count(index.begin(), index.end(), '\n'), 7);
  for (std::size_t i = 0; i + 1 < files.size(); ++i) {
    std::istringstream in(slurp(files[i]));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line[0], '#');
    long prev = 0, n = 0;
    int count = 0;
    double value = 0.0;
    std::string se;
    while (in >> n >> value >> se) {
      EXPECT_GT(n, prev);
      prev = n;
      ++count;
    }
    EXPECT_EQ(count, 3);
  }
}

TEST(EmitPlotData, RejectsMissingMetricAndDuplicateX) {
  TempDir dir;
  SweepPlan p = small_plan();
  p.outputs = {Metric::empirical};
  auto rows = run_sweep(p);
  EXPECT_THROW(emit_plot_data(rows, Metric::upper, dir.path), InvalidArgument);
  rows.push_back(rows.front());
  EXPECT_THROW(emit_plot_data(rows, Metric::empirical, dir.path), InvalidArgument);
}

TEST(ParsePlan, FullPlan) {
  const SweepPlan p = parse(
      "# comment\n"
      "version = 1\n"
      "spectra = 3, 2, 1\n"
      "dims = 10, 1000\n"
      "data_sizes = 100:950:50\n"
      "etas = 0.01, 0.001\n"
      "orderings = 1 2 3, 3 2 1\n"
      "epochs = 5\n"
      "sigma = 0.1\n"
      "reps = 20\n"
      "seed = 7\n"
      "outputs = empirical, upper\n");
  EXPECT_EQ(p.spectra, (std::vector<double>{3, 2, 1}));
  EXPECT_EQ(p.data_sizes.size(), 18u);
  EXPECT_EQ(p.orderings.size(), 2u);
  EXPECT_EQ(p.orderings[1], (std::vector<int>{3, 2, 1}));
  EXPECT_EQ(p.epochs, 5);
  EXPECT_EQ(p.reps, 20u);
  EXPECT_EQ(p.seed, 7u);
  EXPECT_EQ(p.outputs, (std::vector<Metric>{Metric::empirical, Metric::upper}));
}

TEST(ParsePlan, DefaultsAndAllOrderings) {
  const SweepPlan p = parse("version = 1\nspectra = 1, 2\ndims = 4\ndata_sizes = 5\netas = 0.1\n");
  EXPECT_EQ(p.orderings.size(), 2u);
  EXPECT_EQ(p.reps, 200u);
  EXPECT_EQ(p.epochs, 1);
  EXPECT_EQ(p.outputs, (std::vector<Metric>{Metric::empirical}));
}

TEST(ParsePlan, ErrorsCarryLineNumbers) {
  const std::string head = "version = 1\nspectra = 3, 2, 1\n";
  EXPECT_EQ(plan_error_line(head + "dims = ten\n"), 3u);
  EXPECT_EQ(plan_error_line(head + "bogus = 1\n"), 3u);
  EXPECT_EQ(plan_error_line(head + "dims = 10\ndims = 20\n"), 4u);
  EXPECT_EQ(plan_error_line(head + "\n\nno equals sign\n"), 5u);
  EXPECT_EQ(plan_error_line(head + "dims = 10\ndata_sizes = 5\netas = 0.1\noutputs = nope\n"), 6u);
  EXPECT_EQ(plan_error_line(head + "dims = 10\ndata_sizes = 5\netas = 0.1\norderings = 1 2 2\n"), 6u);
  EXPECT_EQ(plan_error_line("spectra = 1\n"), 0u);
  EXPECT_EQ(plan_error_line("version = 2\nspectra = 1\n"), 1u);
  EXPECT_EQ(plan_error_line(head + "data_sizes = 5\netas = 0.1\n"), 0u);
  EXPECT_EQ(plan_error_line(head + "dims = 10\ndata_sizes = 5\netas = 0.1\nreps = 1\n"), 0u);
}

TEST(LoadPlan, MissingFileIsIoError) {
  EXPECT_THROW(load_plan("/nonexistent/plan.txt"), IoError);
}

TEST(BoundsConfig, ParsesAndReports) {
  std::istringstream in("version = 1\nspectra = 3, 2, 1\ndim = 10\nn = 100\neta = 0.01\nsigma = 0.1\n");
  const BoundsConfig c = parse_bounds_config(in);
  EXPECT_EQ(c.ordering, (std::vector<int>{1, 2, 3}));
  const std::string text = bounds_report_text(c);
  for (const char* key : {"exact.forgetting = ", "upper.total = ", "lower.total = ", "summary.task3.k_star = "})
    EXPECT_NE(text.find(key), std::string::npos) << key;

  std::istringstream bad("version = 1\nspectra = 1\ndim = 10\nn = 100\n");
  EXPECT_THROW(parse_bounds_config(bad), PlanError);
}
