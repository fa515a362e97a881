#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmte/dataset.hpp"
#include "kmte/parallel.hpp"
#include "kmte/report.hpp"
#include "kmte/rng.hpp"
#include "kmte/series_logit.hpp"

namespace kmte {

enum class DesignId { i = 1, ii = 2, iii = 3 };

inline const char* design_id_name(DesignId d) {
  switch (d) {
    case DesignId::i: return "i";
    case DesignId::ii: return "ii";
    case DesignId::iii: return "iii";
  }
  return "?";
}

inline DesignId parse_design_id(const std::string& s) {
  if (s == "i" || s == "1") return DesignId::i;
  if (s == "ii" || s == "2") return DesignId::ii;
  if (s == "iii" || s == "3") return DesignId::iii;
  throw std::invalid_argument("invalid design id '" + s +
                              "' (expected i, ii or iii)");
}

struct DesignSpec {
  DesignId id = DesignId::i;
  std::size_t n = 100;
  int censor_pct = 0;  // 0 means no censoring variable at all
  double censor_a = 0.0;
  double censor_b = 1.0;
  std::uint64_t seed = 0;
};

// one covariate X ~ U[0,1]; treatment drawn from logistic(-0.5 X); both error
// draws are taken for every design so the random stream lines up across
// designs under a common seed (design iii uses e1 for both arms as specified,
// leaving its e0 draw unused)
inline Dataset generate_design(const DesignSpec& spec) {
  if (spec.n == 0) throw std::invalid_argument("design needs n >= 1");
  Rng rng(spec.seed);
  Dataset d;
  d.k = 1;
  d.q.resize(spec.n);
  d.delta.resize(spec.n);
  d.t.resize(spec.n);
  d.x.resize(spec.n);
  const bool censor = spec.censor_pct > 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const double x = rng.uniform01();
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    const bool t = rng.bernoulli(logistic(-0.5 * x));
    double y0 = 0.0, y1 = 0.0;
    switch (spec.id) {
      case DesignId::i:
        y0 = 1.0 + x + e0;
        y1 = 1.0 + x + e1;
        break;
      case DesignId::ii:
        y0 = 1.0 + x + e0;
        y1 = 2.0 + x + e1;
        break;
      case DesignId::iii:
        y0 = 1.0 + x + e1;
        y1 = 1.0 + 3.0 * x + e1;
        break;
    }
    const double y = t ? y1 : y0;
    d.x[i] = {x};
    d.t[i] = t ? 1 : 0;
    if (censor) {
      const double c = spec.censor_a + spec.censor_b * rng.exponential();
      d.q[i] = std::min(y, c);
      d.delta[i] = y <= c ? 1 : 0;
    } else {
      d.q[i] = y;
      d.delta[i] = 1;
    }
  }
  return d;
}

struct CensorCalibration {
  double a = 0.0;
  double b = 1.0;
  double achieved_pct = 0.0;  // on the calibration sample itself
};

// fixes a = 0 and bisects the exponential scale b so that the simulated
// fraction of Y > b*E hits the target; the 10^6 calibration draws come from a
// fixed internal substream so every caller sees the same (a, b) for a given
// (design, target). Scaling (rather than shifting) the censoring variable
// spreads the censored mass over the whole outcome range; a shifted
// unit-rate exponential would censor almost exclusively in the right tail,
// where the product-limit weights are least stable.
inline CensorCalibration calibrate_censoring(DesignId id, double target_pct) {
  if (!(target_pct > 0.0 && target_pct < 100.0))
    throw std::invalid_argument("censoring target must be in (0, 100)");
  constexpr std::size_t kDraws = 1000000;
  constexpr std::uint64_t kCalibStream = 0x6b6d74652d63616cULL;
  Rng rng(derive_seed(kCalibStream, static_cast<std::uint64_t>(id),
                      static_cast<std::uint64_t>(target_pct * 1000.0)));
  // censored iff Y > b*E, i.e. iff Y/E > b, so only the ratios matter
  std::vector<double> ratio(kDraws);
  for (std::size_t i = 0; i < kDraws; ++i) {
    const double x = rng.uniform01();
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    const bool t = rng.bernoulli(logistic(-0.5 * x));
    double y = 0.0;
    switch (id) {
      case DesignId::i: y = 1.0 + x + (t ? e1 : e0); break;
      case DesignId::ii: y = t ? 2.0 + x + e1 : 1.0 + x + e0; break;
      case DesignId::iii: y = t ? 1.0 + 3.0 * x + e1 : 1.0 + x + e1; break;
    }
    ratio[i] = y / rng.exponential();
  }
  std::sort(ratio.begin(), ratio.end());
  const double target = target_pct / 100.0;
  auto frac_above = [&](double b) {
    const auto it = std::upper_bound(ratio.begin(), ratio.end(), b);
    return static_cast<double>(ratio.end() - it) / static_cast<double>(kDraws);
  };
  double lo = 1e-9, hi = std::max(ratio.back(), 1.0) + 1.0;
  if (!(frac_above(lo) >= target && target >= frac_above(hi)))
    throw std::runtime_error("censoring calibration does not bracket target");
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (frac_above(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  CensorCalibration cal;
  cal.a = 0.0;
  cal.b = 0.5 * (lo + hi);
  cal.achieved_pct = 100.0 * frac_above(cal.b);
  if (std::abs(cal.achieved_pct - target_pct) > 0.5)
    throw std::runtime_error("censoring calibration missed the target");
  return cal;
}

struct TestRequest {
  TestKind kind = TestKind::dte;
  StatType stat = StatType::ks;
};

// "dte-ks", "hom-cvm", ...; "-both" expands to the two single-stat requests
inline std::vector<TestRequest> parse_test_requests(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos)
    throw std::invalid_argument("invalid test spec '" + s +
                                "' (expected e.g. dte-ks)");
  const std::string kind_s = s.substr(0, dash);
  const std::string stat_s = s.substr(dash + 1);
  TestKind kind;
  if (kind_s == "dte") kind = TestKind::dte;
  else if (kind_s == "cate") kind = TestKind::cate;
  else if (kind_s == "hom") kind = TestKind::hom;
  else if (kind_s == "ldte") kind = TestKind::ldte;
  else
    throw std::invalid_argument("invalid test kind '" + kind_s + "'");
  if (stat_s == "ks") return {{kind, StatType::ks}};
  if (stat_s == "cvm") return {{kind, StatType::cvm}};
  if (stat_s == "both")
    return {{kind, StatType::ks}, {kind, StatType::cvm}};
  throw std::invalid_argument("invalid statistic '" + stat_s +
                              "' (expected ks, cvm or both)");
}

struct StudyOptions {
  std::vector<DesignId> designs;
  std::vector<std::size_t> ns;
  std::vector<int> censoring;  // percentages
  std::vector<TestRequest> tests;
  std::size_t R = 1000;
  std::size_t B = 199;
  double alpha = 0.05;
  std::uint64_t seed = 20230914;
  int threads = 1;
};

struct RejectionRow {
  std::string design;
  int censoring = 0;
  std::size_t n = 0;
  std::string test;
  std::string statistic_type;
  double rate = 0.0;  // percent
  double se = 0.0;    // percent
  std::size_t R = 0;
  std::size_t B = 0;
  std::uint64_t seed = 0;
};

// every (design, censoring, n) cell gets its own seed chain derived from the
// master seed, each replication its own substream, and the bootstrap a
// further substream per test kind — so the table is invariant to the thread
// count and to which cells are requested together
inline std::vector<RejectionRow> rejection_study(const StudyOptions& opt) {
  if (opt.R < 1) throw std::invalid_argument("R must be >= 1");
  if (opt.designs.empty() || opt.ns.empty() || opt.censoring.empty() ||
      opt.tests.empty())
    throw std::invalid_argument("study needs designs, ns, censoring, tests");
  for (const auto& tr : opt.tests)
    if (tr.kind == TestKind::ldte)
      throw std::invalid_argument(
          "ldte is not available in the simulation designs (no instrument)");

  // distinct kinds, in first-appearance order; each runs one pipeline per rep
  std::vector<TestKind> kinds;
  for (const auto& tr : opt.tests)
    if (std::find(kinds.begin(), kinds.end(), tr.kind) == kinds.end())
      kinds.push_back(tr.kind);

  std::vector<RejectionRow> rows;
  for (DesignId design : opt.designs) {
    for (int cens : opt.censoring) {
      CensorCalibration cal;
      if (cens > 0) cal = calibrate_censoring(design, cens);
      for (std::size_t n : opt.ns) {
        const std::uint64_t cell_seed =
            derive_seed(opt.seed, static_cast<std::uint64_t>(design),
                        static_cast<std::uint64_t>(cens), n);
        // reject[k][r] for kind k, rep r; 2 slots per rep (ks, cvm)
        std::vector<std::vector<unsigned char>> reject(
            kinds.size(), std::vector<unsigned char>(2 * opt.R, 0));
        parallel_for(opt.R, opt.threads, [&](std::size_t r) {
          DesignSpec spec;
          spec.id = design;
          spec.n = n;
          spec.censor_pct = cens;
          spec.censor_a = cal.a;
          spec.censor_b = cal.b;
          spec.seed = derive_seed(cell_seed, r);
          const Dataset data = generate_design(spec);
          for (std::size_t k = 0; k < kinds.size(); ++k) {
            TestOptions topt;
            topt.test = kinds[k];
            topt.B = opt.B;
            topt.alpha = opt.alpha;
            topt.seed = derive_seed(spec.seed, 1000 + static_cast<int>(kinds[k]));
            topt.threads = 1;
            const PipelineResult res = run_pipeline(data, topt);
            const double p_ks = bootstrap_p_value(res.reps.ks, res.ks, false);
            const double p_cvm =
                bootstrap_p_value(res.reps.cvm, res.cvm, false);
            reject[k][2 * r] = p_ks <= opt.alpha ? 1 : 0;
            reject[k][2 * r + 1] = p_cvm <= opt.alpha ? 1 : 0;
          }
        });
        for (const auto& tr : opt.tests) {
          const std::size_t k = static_cast<std::size_t>(
              std::find(kinds.begin(), kinds.end(), tr.kind) - kinds.begin());
          const std::size_t off = tr.stat == StatType::ks ? 0 : 1;
          std::size_t hits = 0;
          for (std::size_t r = 0; r < opt.R; ++r) hits += reject[k][2 * r + off];
          const double phat =
              static_cast<double>(hits) / static_cast<double>(opt.R);
          RejectionRow row;
          row.design = design_id_name(design);
          row.censoring = cens;
          row.n = n;
          row.test = test_kind_name(tr.kind);
          row.statistic_type = stat_type_name(tr.stat);
          row.rate = 100.0 * phat;
          row.se = 100.0 * std::sqrt(phat * (1.0 - phat) /
                                     static_cast<double>(opt.R));
          row.R = opt.R;
          row.B = opt.B;
          row.seed = opt.seed;
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

namespace detail {

// shortest round-trip formatting so equal doubles print identically
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline void write_rejection_csv(const std::vector<RejectionRow>& rows,
                                std::ostream& os) {
  os << "design,censoring,n,test,statistic_type,rate,se,R,B,seed\n";
  for (const auto& r : rows) {
    os << r.design << ',' << r.censoring << ',' << r.n << ',' << r.test << ','
       << r.statistic_type << ',' << detail::fmt_double(r.rate) << ','
       << detail::fmt_double(r.se) << ',' << r.R << ',' << r.B << ',' << r.seed
       << '\n';
  }
}

inline nlohmann::ordered_json rejection_table_json(
    const std::vector<RejectionRow>& rows) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["design"] = r.design;
    e["censoring"] = r.censoring;
    e["n"] = r.n;
    e["test"] = r.test;
    e["statistic_type"] = r.statistic_type;
    e["rate"] = r.rate;
    e["se"] = r.se;
    e["R"] = r.R;
    e["B"] = r.B;
    e["seed"] = r.seed;
    arr.push_back(e);
  }
  j["rows"] = arr;
  return j;
}

}  // namespace kmte
