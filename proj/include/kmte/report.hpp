#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmte/bootstrap.hpp"
#include "kmte/dataset.hpp"
#include "kmte/influence.hpp"
#include "kmte/km_weights.hpp"
#include "kmte/processes.hpp"
#include "kmte/series_logit.hpp"

namespace kmte {

constexpr const char* kReportSchemaVersion = "1";

struct TestOptions {
  TestKind test = TestKind::dte;
  bool run_ks = true;
  bool run_cvm = true;
  double tau_bar = kInf;
  int degree = -1;  // -1: pick by sample size
  std::size_t B = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 12345;
  GridMode grid_mode = GridMode::sample_pairs;
  MultiplierLaw law = MultiplierLaw::mammen;
  int threads = 1;
  bool smoothed_p = false;
};

struct StatResult {
  StatType stat = StatType::ks;
  double value = 0.0;
  double p_value = 1.0;
  double crit01 = 0.0, crit05 = 0.0, crit10 = 0.0;
  double critical_value = 0.0;  // at the requested level
};

struct TestReport {
  std::string test;
  std::vector<StatResult> stats;
  double alpha = 0.05;
  std::size_t B = 0;
  std::uint64_t seed = 0;
  std::string multiplier;
  bool smoothed_p = false;
  std::size_t n = 0, n1 = 0, n0 = 0;
  bool has_cells = false;
  std::size_t n_tz[2][2] = {{0, 0}, {0, 0}};
  double tau_bar = kInf;
  int degree = 0;
  bool converged = false;
  int iterations = 0;
  std::size_t clip_count = 0;
  double km_mass_treated = 0.0, km_mass_control = 0.0;
  double km_mass_tz[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  std::string grid_mode;
  std::size_t grid_size = 0;
  std::size_t excluded_points = 0;
  std::size_t series_clamped = 0;
  // bootstrap replicates kept for the optional audit dump
  BootstrapReplicates replicates;
};

// everything a single test run produces before report formatting; shared by
// the CLI path and the Monte Carlo driver
struct PipelineResult {
  double ks = 0.0, cvm = 0.0;
  bool cvm_valid = false;
  BootstrapReplicates reps;
  std::size_t n = 0, n1 = 0, n0 = 0;
  bool has_cells = false;
  std::size_t n_tz[2][2] = {{0, 0}, {0, 0}};
  double mass1 = 0.0, mass0 = 0.0;
  double mass_tz[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  int degree = 0;
  bool converged = false;
  int iterations = 0;
  std::size_t clip_count = 0;
  std::size_t excluded_points = 0;
  std::size_t series_clamped = 0;
  GridMode grid_mode = GridMode::sample_pairs;
  std::size_t grid_size = 0;
};

inline PipelineResult run_pipeline(const Dataset& d, const TestOptions& opt) {
  PipelineResult out;
  out.n = d.size();
  const int degree =
      opt.degree >= 0 ? opt.degree : default_degree(d.size());
  out.degree = degree;

  const bool covariate_grid =
      opt.test == TestKind::cate || opt.test == TestKind::hom;
  EvaluationGrid grid =
      covariate_grid ? default_covariate_grid(d, opt.tau_bar)
                     : default_grid(d, opt.tau_bar, opt.grid_mode);
  out.grid_mode = grid.mode;
  out.grid_size = grid.size();
  if (opt.run_cvm && grid.mode == GridMode::full_product)
    throw std::invalid_argument(
        "cvm statistic needs a sample_pairs grid; rerun with --grid "
        "sample-pairs or --stat ks");

  ProcessValues proc;
  InfluenceMatrix psi;
  std::size_t clip = 0;

  if (opt.test == TestKind::ldte) {
    if (!d.has_instrument)
      throw std::invalid_argument("instrument column required for ldte");
    CellSplit cells = split_by_arm_instrument(d);
    OrderedSubsample sub[2][2];
    for (int t = 0; t < 2; ++t)
      for (int z = 0; z < 2; ++z) {
        sub[t][z] = ordered_subsample(d, cells.cell[t][z]);
        out.n_tz[t][z] = sub[t][z].size();
        out.mass_tz[t][z] = sub[t][z].total_mass();
      }
    out.has_cells = true;
    LogitFit qfit = fit_logit(d.x, d.z, degree);
    out.converged = qfit.converged;
    out.iterations = qfit.iterations;
    proc = ldte_process(sub, qfit, grid, d.size(), &clip);
    psi = influence_ldte(d, sub, qfit, degree, grid, opt.threads);
  } else {
    ArmSplit split = split_by_arm(d);
    OrderedSubsample s1 = ordered_subsample(d, split.treated);
    OrderedSubsample s0 = ordered_subsample(d, split.control);
    out.n1 = s1.size();
    out.n0 = s0.size();
    out.mass1 = s1.total_mass();
    out.mass0 = s0.total_mass();
    LogitFit pfit = fit_logit(d.x, d.t, degree);
    out.converged = pfit.converged;
    out.iterations = pfit.iterations;
    switch (opt.test) {
      case TestKind::dte:
        proc = dte_process(s1, s0, pfit, grid, d.size(), &clip);
        psi = influence_dte(d, s1, s0, pfit, degree, grid, opt.threads);
        break;
      case TestKind::cate:
        proc = cate_process(s1, s0, pfit, grid, opt.tau_bar, d.size(), &clip);
        psi = influence_cate(d, s1, s0, pfit, degree, grid, opt.tau_bar,
                             opt.threads);
        break;
      case TestKind::hom:
        proc = hom_process(s1, s0, pfit, grid, opt.tau_bar, d.size(), &clip);
        psi = influence_hom(d, s1, s0, pfit, degree, grid, opt.tau_bar,
                            opt.threads);
        break;
      default:
        throw std::logic_error("unreachable test kind");
    }
  }

  out.ks = ks_statistic(proc, d.size());
  if (grid.mode != GridMode::full_product) {
    out.cvm = cvm_statistic(proc, d.size());
    out.cvm_valid = true;
  }
  out.clip_count = clip + psi.prop_clipped;
  out.excluded_points = psi.excluded_points;
  out.series_clamped = psi.series_clamped;
  out.reps = bootstrap_run(psi.psi, opt.B, opt.seed, opt.law, opt.threads);
  return out;
}

inline TestReport run_test(const Dataset& d, const TestOptions& opt) {
  PipelineResult r = run_pipeline(d, opt);
  TestReport rep;
  rep.test = test_kind_name(opt.test);
  rep.alpha = opt.alpha;
  rep.B = opt.B;
  rep.seed = opt.seed;
  rep.multiplier = multiplier_law_name(opt.law);
  rep.smoothed_p = opt.smoothed_p;
  rep.n = r.n;
  rep.n1 = r.n1;
  rep.n0 = r.n0;
  rep.has_cells = r.has_cells;
  rep.tau_bar = opt.tau_bar;
  rep.degree = r.degree;
  rep.converged = r.converged;
  rep.iterations = r.iterations;
  rep.clip_count = r.clip_count;
  rep.km_mass_treated = r.mass1;
  rep.km_mass_control = r.mass0;
  for (int t = 0; t < 2; ++t)
    for (int z = 0; z < 2; ++z) {
      rep.n_tz[t][z] = r.n_tz[t][z];
      rep.km_mass_tz[t][z] = r.mass_tz[t][z];
    }
  rep.grid_mode = grid_mode_name(r.grid_mode);
  rep.grid_size = r.grid_size;
  rep.excluded_points = r.excluded_points;
  rep.series_clamped = r.series_clamped;

  auto make_stat = [&](StatType st, double value,
                       const std::vector<double>& reps) {
    StatResult s;
    s.stat = st;
    s.value = value;
    s.p_value = bootstrap_p_value(reps, value, opt.smoothed_p);
    s.crit01 = critical_value_at(reps, 0.01);
    s.crit05 = critical_value_at(reps, 0.05);
    s.crit10 = critical_value_at(reps, 0.10);
    s.critical_value = critical_value_at(reps, opt.alpha);
    return s;
  };
  if (opt.run_ks) rep.stats.push_back(make_stat(StatType::ks, r.ks, r.reps.ks));
  if (opt.run_cvm)
    rep.stats.push_back(make_stat(StatType::cvm, r.cvm, r.reps.cvm));
  rep.replicates = std::move(r.reps);
  return rep;
}

inline nlohmann::ordered_json report_to_json(const TestReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["test"] = r.test;
  nlohmann::ordered_json stats = nlohmann::ordered_json::array();
  for (const auto& s : r.stats) {
    nlohmann::ordered_json e;
    e["stat"] = stat_type_name(s.stat);
    e["value"] = s.value;
    e["p_value"] = s.p_value;
    e["critical_values"] = {
        {"1%", s.crit01}, {"5%", s.crit05}, {"10%", s.crit10}};
    e["critical_value_at_alpha"] = s.critical_value;
    stats.push_back(e);
  }
  j["stats"] = stats;
  j["alpha"] = r.alpha;
  j["B"] = r.B;
  j["seed"] = r.seed;
  j["multiplier"] = r.multiplier;
  j["smoothed_p"] = r.smoothed_p;
  j["n"] = r.n;
  if (r.has_cells) {
    j["n_tz"] = {{"t1z1", r.n_tz[1][1]},
                 {"t1z0", r.n_tz[1][0]},
                 {"t0z1", r.n_tz[0][1]},
                 {"t0z0", r.n_tz[0][0]}};
    j["km_mass"] = {{"t1z1", r.km_mass_tz[1][1]},
                    {"t1z0", r.km_mass_tz[1][0]},
                    {"t0z1", r.km_mass_tz[0][1]},
                    {"t0z0", r.km_mass_tz[0][0]}};
  } else {
    j["n1"] = r.n1;
    j["n0"] = r.n0;
    j["km_mass"] = {{"treated", r.km_mass_treated},
                    {"control", r.km_mass_control}};
  }
  if (r.tau_bar == kInf)
    j["tau_bar"] = "inf";
  else
    j["tau_bar"] = r.tau_bar;
  j["propensity"] = {{"degree", r.degree},
                     {"converged", r.converged},
                     {"iterations", r.iterations},
                     {"clip_count", r.clip_count}};
  j["grid"] = {{"mode", r.grid_mode}, {"size", r.grid_size}};
  j["diagnostics"] = {{"excluded_points", r.excluded_points},
                      {"series_clamped", r.series_clamped}};
  return j;
}

}  // namespace kmte
