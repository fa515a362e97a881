// kmte: heterogeneity tests for treatment effects on censored durations.
//
//   kmte test     -- run one test on a CSV dataset, JSON report to stdout
//   kmte simulate -- rejection-rate study over the built-in designs

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kmte/csv.hpp"
#include "kmte/report.hpp"
#include "kmte/simulate.hpp"

namespace {

int fail(const std::string& message) {
  nlohmann::ordered_json j;
  j["schema_version"] = kmte::kReportSchemaVersion;
  j["error"] = {{"message", message}};
  std::cout << j.dump(2) << std::endl;
  return 1;
}

kmte::TestKind parse_kind(const std::string& s) {
  if (s == "dte") return kmte::TestKind::dte;
  if (s == "cate") return kmte::TestKind::cate;
  if (s == "hom") return kmte::TestKind::hom;
  if (s == "ldte") return kmte::TestKind::ldte;
  throw std::invalid_argument("unknown test '" + s + "'");
}

struct TestArgs {
  std::string input;
  kmte::ColumnMap cols;
  std::string test = "dte";
  std::string stat = "both";
  double tau_bar = kmte::kInf;
  int degree = -1;
  std::size_t B = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 12345;
  std::string grid = "sample-pairs";
  std::string multiplier = "mammen";
  int threads = 1;
  bool smoothed_p = false;
  std::string dump_replicates;
};

int cmd_test(const TestArgs& a) {
  kmte::TestOptions opt;
  opt.test = parse_kind(a.test);
  if (opt.test == kmte::TestKind::ldte && a.cols.z.empty())
    throw std::invalid_argument("instrument column required");
  opt.run_ks = a.stat == "ks" || a.stat == "both";
  opt.run_cvm = a.stat == "cvm" || a.stat == "both";
  if (!opt.run_ks && !opt.run_cvm)
    throw std::invalid_argument("unknown statistic '" + a.stat +
                                "' (expected ks, cvm or both)");
  opt.tau_bar = a.tau_bar;
  opt.degree = a.degree;
  opt.B = a.B;
  opt.alpha = a.alpha;
  opt.seed = a.seed;
  if (a.grid == "sample-pairs")
    opt.grid_mode = kmte::GridMode::sample_pairs;
  else if (a.grid == "full-product")
    opt.grid_mode = kmte::GridMode::full_product;
  else
    throw std::invalid_argument("unknown grid '" + a.grid + "'");
  if (a.multiplier == "mammen")
    opt.law = kmte::MultiplierLaw::mammen;
  else if (a.multiplier == "rademacher")
    opt.law = kmte::MultiplierLaw::rademacher;
  else
    throw std::invalid_argument("unknown multiplier '" + a.multiplier + "'");
  opt.threads = a.threads;
  opt.smoothed_p = a.smoothed_p;

  const kmte::Dataset d = kmte::load_csv(a.input, a.cols);
  const kmte::TestReport rep = kmte::run_test(d, opt);
  if (!a.dump_replicates.empty()) {
    std::ofstream out(a.dump_replicates);
    if (!out)
      throw std::invalid_argument("cannot open file for write: " +
                                  a.dump_replicates);
    out << "rep,ks,cvm\n";
    for (std::size_t b = 0; b < rep.replicates.ks.size(); ++b)
      out << b << ',' << kmte::detail::fmt_double(rep.replicates.ks[b]) << ','
          << kmte::detail::fmt_double(rep.replicates.cvm[b]) << '\n';
  }
  std::cout << kmte::report_to_json(rep).dump(2) << std::endl;
  return 0;
}

struct SimArgs {
  std::vector<std::string> designs = {"i"};
  std::vector<std::size_t> ns = {100};
  std::vector<int> censoring = {0};
  std::vector<std::string> tests = {"dte-ks"};
  std::size_t R = 1000;
  std::size_t B = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 20230914;
  int threads = 1;
  std::string out = "rejection";
};

int cmd_simulate(const SimArgs& a) {
  kmte::StudyOptions opt;
  for (const auto& s : a.designs) opt.designs.push_back(kmte::parse_design_id(s));
  opt.ns = a.ns;
  opt.censoring = a.censoring;
  for (const auto& s : a.tests)
    for (const auto& tr : kmte::parse_test_requests(s))
      opt.tests.push_back(tr);
  opt.R = a.R;
  opt.B = a.B;
  opt.alpha = a.alpha;
  opt.seed = a.seed;
  opt.threads = a.threads;

  const std::vector<kmte::RejectionRow> rows = kmte::rejection_study(opt);
  const std::string csv_path = a.out + ".csv";
  const std::string json_path = a.out + ".json";
  {
    std::ofstream out(csv_path);
    if (!out)
      throw std::invalid_argument("cannot open file for write: " + csv_path);
    kmte::write_rejection_csv(rows, out);
  }
  {
    std::ofstream out(json_path);
    if (!out)
      throw std::invalid_argument("cannot open file for write: " + json_path);
    out << kmte::rejection_table_json(rows).dump(2) << '\n';
  }
  std::cout << kmte::rejection_table_json(rows).dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"treatment-effect heterogeneity tests for censored durations"};
  app.require_subcommand(1);

  TestArgs ta;
  std::string xcols = "x1";
  CLI::App* test = app.add_subcommand("test", "run one test on a CSV dataset");
  test->add_option("--input", ta.input, "CSV file with one row per unit")
      ->required();
  test->add_option("--q-col", ta.cols.q, "duration column (default q)");
  test->add_option("--delta-col", ta.cols.delta,
                   "non-censoring indicator column (default delta)");
  test->add_option("--t-col", ta.cols.t, "treatment column (default t)");
  test->add_option("--x-cols", xcols,
                   "comma-separated covariate columns (default x1)");
  test->add_option("--z-col", ta.cols.z, "binary instrument column (ldte)");
  test->add_option("--test", ta.test, "dte | cate | hom | ldte");
  test->add_option("--stat", ta.stat, "ks | cvm | both");
  test->add_option("--tau-bar", ta.tau_bar,
                   "restriction point for cate/hom (default +inf)");
  test->add_option("--degree", ta.degree,
                   "propensity basis degree (default: by sample size)");
  test->add_option("--B", ta.B, "bootstrap replicates (default 1000)");
  test->add_option("--alpha", ta.alpha, "headline level (default 0.05)");
  test->add_option("--seed", ta.seed, "bootstrap seed");
  test->add_option("--grid", ta.grid, "sample-pairs | full-product");
  test->add_option("--multiplier", ta.multiplier, "mammen | rademacher");
  test->add_option("--threads", ta.threads, "worker cap (default 1)");
  test->add_flag("--smoothed-p", ta.smoothed_p,
                 "use (1 + count) / (B + 1) p-values");
  test->add_option("--dump-replicates", ta.dump_replicates,
                   "also write bootstrap replicates to this CSV");

  SimArgs sa;
  CLI::App* sim = app.add_subcommand("simulate", "rejection-rate study");
  sim->add_option("--designs", sa.designs, "designs: i, ii, iii")
      ->delimiter(',');
  sim->add_option("--ns", sa.ns, "sample sizes")->delimiter(',');
  sim->add_option("--censoring", sa.censoring, "censoring percentages")
      ->delimiter(',');
  sim->add_option("--tests", sa.tests, "e.g. dte-ks,hom-both")->delimiter(',');
  sim->add_option("--R", sa.R, "Monte Carlo replications");
  sim->add_option("--B", sa.B, "bootstrap replicates per replication");
  sim->add_option("--alpha", sa.alpha, "rejection level");
  sim->add_option("--seed", sa.seed, "master seed");
  sim->add_option("--threads", sa.threads, "worker cap (default 1)");
  sim->add_option("--out", sa.out,
                  "output path prefix; writes <out>.csv and <out>.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (test->parsed()) {
      ta.cols.x.clear();
      std::size_t start = 0;
      while (start <= xcols.size()) {
        const auto comma = xcols.find(',', start);
        const std::string name = xcols.substr(
            start, comma == std::string::npos ? std::string::npos
                                              : comma - start);
        if (!name.empty()) ta.cols.x.push_back(name);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (ta.cols.x.empty())
        throw std::invalid_argument("--x-cols needs at least one column");
      return cmd_test(ta);
    }
    return cmd_simulate(sa);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
}
