#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "heparl/assess.hpp"
#include "heparl/learners.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/util.hpp"

namespace heparl {

// ---------------------------------------------------------------------------
// Follower matching: an episode follows a policy when the physician's action
// equals the policy's best action on strictly more than tau of the decision
// steps.
// ---------------------------------------------------------------------------

struct FollowerSplit {
  std::vector<Episode> followers;
  std::vector<Episode> non_followers;
  double tau = 0.7;
  std::string policy_id;
};

inline FollowerSplit match_followers(const Cohort& cohort, const AnyQ& q, double tau,
                                     const scoring::ScoreConfig& cfg,
                                     std::string policy_id = "") {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("match_followers: tau must lie in [0,1]");
  }
  FollowerSplit split;
  split.tau = tau;
  split.policy_id = std::move(policy_id);
  for (const Episode& ep : cohort.episodes) {
    if (ep.steps.size() < 2) {
      throw ValidationError("episode " + ep.episode_id + " has no decision step");
    }
    const size_t n = ep.steps.size() - 1;
    size_t matches = 0;
    for (size_t t = 0; t < n; ++t) {
      if (ep.steps[t].action == policy_best_for(q, ep.steps[t].vitals, cfg)) ++matches;
    }
    const double frac = static_cast<double>(matches) / static_cast<double>(n);
    (frac > tau ? split.followers : split.non_followers).push_back(ep);
  }
  return split;
}

inline FollowerSplit match_followers(const Cohort& cohort, const Checkpoint& ck, double tau) {
  return match_followers(cohort, ck.q, tau, default_config(ck.kind),
                         to_string(ck.algo) + "-" + to_string(ck.kind) + "-e" +
                             std::to_string(ck.epoch));
}

// ---------------------------------------------------------------------------
// Significance tests, self-contained.
// ---------------------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

struct ZTestResult {
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace detail

// Unequal-variance two-sample test with the Welch-Satterthwaite degrees of
// freedom; two-sided p. Degenerate inputs (a sample below size 2, or no
// variance anywhere) are flagged instead of dividing by zero.
inline TTestResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  TTestResult r;
  if (a.size() < 2 || b.size() < 2) {
    r.degenerate = true;
    r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  for (double x : a) {
    if (!std::isfinite(x)) throw ValidationError("welch_t: non-finite sample value");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw ValidationError("welch_t: non-finite sample value");
  }
  const double ma = detail::mean(a), mb = detail::mean(b);
  const double va = detail::sample_var(a, ma), vb = detail::sample_var(b, mb);
  if (va + vb == 0.0) {
    r.degenerate = true;
    r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double se2 = va / na + vb / nb;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  r.p = detail::reg_inc_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
  return r;
}

// Pooled two-proportion z-test on death counts, reported alongside the t-test
// as a sanity column for the mortality comparison.
inline ZTestResult two_proportion_z(size_t deaths_a, size_t n_a, size_t deaths_b, size_t n_b) {
  ZTestResult r;
  if (n_a == 0 || n_b == 0 || deaths_a > n_a || deaths_b > n_b) {
    r.degenerate = true;
    r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double pool = static_cast<double>(deaths_a + deaths_b) / static_cast<double>(n_a + n_b);
  if (pool <= 0.0 || pool >= 1.0) {
    r.degenerate = true;
    r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double pa = static_cast<double>(deaths_a) / static_cast<double>(n_a);
  const double pb = static_cast<double>(deaths_b) / static_cast<double>(n_b);
  const double se = std::sqrt(pool * (1.0 - pool) *
                              (1.0 / static_cast<double>(n_a) + 1.0 / static_cast<double>(n_b)));
  r.z = (pa - pb) / se;
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

inline double improvement(double baseline, double value) { return (baseline - value) / baseline; }

// ---------------------------------------------------------------------------
// Group outcome rows.
// ---------------------------------------------------------------------------

struct OutcomeRow {
  std::string label;
  size_t n_episodes = 0;
  size_t n_deaths = 0;
  double mortality = 0.0;
  double stay_days = 0.0;
  double improvement_mortality = 0.0;  // fraction vs the whole-cohort baseline
  double improvement_stay = 0.0;
  TTestResult t_mortality;  // followers vs non-followers, mirrored in both rows
  TTestResult t_stay;
  ZTestResult z_mortality;
  bool empty = false;
  std::vector<std::string> flags;
};

namespace detail {

inline OutcomeRow basic_row(std::string label, const std::vector<Episode>& eps) {
  OutcomeRow row;
  row.label = std::move(label);
  row.n_episodes = eps.size();
  if (eps.empty()) {
    row.empty = true;
    row.flags.push_back("empty group: statistics omitted");
    row.t_mortality.degenerate = row.t_stay.degenerate = row.z_mortality.degenerate = true;
    row.t_mortality.p = row.t_stay.p = row.z_mortality.p =
        std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  double stay = 0.0;
  for (const Episode& ep : eps) {
    if (ep.outcome == Outcome::Died) ++row.n_deaths;
    stay += ep.los_days;
  }
  row.mortality = static_cast<double>(row.n_deaths) / static_cast<double>(row.n_episodes);
  row.stay_days = stay / static_cast<double>(row.n_episodes);
  return row;
}

inline void apply_improvements(OutcomeRow& row, const OutcomeRow& baseline) {
  if (row.empty) return;
  if (baseline.mortality > 0.0) {
    row.improvement_mortality = improvement(baseline.mortality, row.mortality);
  } else {
    row.flags.push_back("baseline mortality is zero: improvement undefined, reported as 0");
  }
  if (baseline.stay_days > 0.0) {
    row.improvement_stay = improvement(baseline.stay_days, row.stay_days);
  } else {
    row.flags.push_back("baseline stay is zero: improvement undefined, reported as 0");
  }
}

}  // namespace detail

// Baseline over the whole cohort: the physician outcome itself.
inline OutcomeRow baseline_row(const Cohort& cohort) {
  OutcomeRow row = detail::basic_row("physician", cohort.episodes);
  row.t_mortality.degenerate = row.t_stay.degenerate = row.z_mortality.degenerate = true;
  row.t_mortality.p = row.t_stay.p = row.z_mortality.p =
      std::numeric_limits<double>::quiet_NaN();
  return row;
}

// Follower and non-follower rows with improvements against the whole-cohort
// baseline and followers-vs-non-followers significance tests.
inline std::pair<OutcomeRow, OutcomeRow> group_stats(const FollowerSplit& split) {
  std::vector<Episode> all = split.followers;
  all.insert(all.end(), split.non_followers.begin(), split.non_followers.end());
  const OutcomeRow baseline = detail::basic_row("baseline", all);

  OutcomeRow f = detail::basic_row("followers", split.followers);
  OutcomeRow nf = detail::basic_row("non-followers", split.non_followers);
  detail::apply_improvements(f, baseline);
  detail::apply_improvements(nf, baseline);

  if (!f.empty && !nf.empty) {
    std::vector<double> mort_f, mort_nf, stay_f, stay_nf;
    for (const Episode& ep : split.followers) {
      mort_f.push_back(ep.outcome == Outcome::Died ? 1.0 : 0.0);
      stay_f.push_back(ep.los_days);
    }
    for (const Episode& ep : split.non_followers) {
      mort_nf.push_back(ep.outcome == Outcome::Died ? 1.0 : 0.0);
      stay_nf.push_back(ep.los_days);
    }
    f.t_mortality = nf.t_mortality = welch_t(mort_f, mort_nf);
    f.t_stay = nf.t_stay = welch_t(stay_f, stay_nf);
    f.z_mortality = nf.z_mortality =
        two_proportion_z(f.n_deaths, f.n_episodes, nf.n_deaths, nf.n_episodes);
  } else {
    for (OutcomeRow* row : {&f, &nf}) {
      row->t_mortality.degenerate = row->t_stay.degenerate = row->z_mortality.degenerate = true;
      row->t_mortality.p = row->t_stay.p = row->z_mortality.p =
          std::numeric_limits<double>::quiet_NaN();
    }
  }
  return {std::move(f), std::move(nf)};
}

// ---------------------------------------------------------------------------
// Whole-table reports.
// ---------------------------------------------------------------------------

struct ModelOutcome {
  std::string model;
  OutcomeRow followers;
  OutcomeRow non_followers;
};

struct OutcomeReport {
  double tau = 0.7;
  OutcomeRow baseline;
  std::vector<ModelOutcome> models;
};

inline OutcomeReport outcome_report(const Cohort& cohort,
                                    const std::vector<std::pair<std::string, Checkpoint>>& models,
                                    double tau, int jobs = 1) {
  OutcomeReport report;
  report.tau = tau;
  report.baseline = baseline_row(cohort);
  report.models.resize(models.size());
  parallel_for(models.size(), jobs, [&](size_t i) {
    const auto split = match_followers(cohort, models[i].second, tau);
    auto [f, nf] = group_stats(split);
    report.models[i] = ModelOutcome{models[i].first, std::move(f), std::move(nf)};
  });
  return report;
}

namespace detail {

inline std::string num_csv(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace detail

inline std::string outcome_csv(const OutcomeReport& r) {
  std::ostringstream out;
  out << "model,n_followers,MoR,AIHS,improvement_MoR,improvement_AIHS,p_MoR,p_AIHS,tau\n";
  out << "physician," << r.baseline.n_episodes << "," << detail::num_csv(r.baseline.mortality)
      << "," << detail::num_csv(r.baseline.stay_days) << ",0,0,,," << detail::num_csv(r.tau)
      << "\n";
  for (const auto& m : r.models) {
    const OutcomeRow& f = m.followers;
    out << m.model << "," << f.n_episodes << "," << detail::num_csv(f.mortality) << ","
        << detail::num_csv(f.stay_days) << "," << detail::num_csv(f.improvement_mortality)
        << "," << detail::num_csv(f.improvement_stay) << ","
        << detail::num_csv(f.t_mortality.p) << "," << detail::num_csv(f.t_stay.p) << ","
        << detail::num_csv(r.tau) << "\n";
  }
  return out.str();
}

inline nlohmann::json to_json(const TTestResult& t) {
  return {{"t", t.t}, {"df", t.df}, {"p", t.p}, {"degenerate", t.degenerate}};
}

inline nlohmann::json to_json(const ZTestResult& z) {
  return {{"z", z.z}, {"p", z.p}, {"degenerate", z.degenerate}};
}

inline nlohmann::json to_json(const OutcomeRow& row) {
  return {{"label", row.label},
          {"n_episodes", row.n_episodes},
          {"n_deaths", row.n_deaths},
          {"mortality", row.mortality},
          {"stay_days", row.stay_days},
          {"improvement_mortality", row.improvement_mortality},
          {"improvement_stay", row.improvement_stay},
          {"t_mortality", to_json(row.t_mortality)},
          {"t_stay", to_json(row.t_stay)},
          {"z_mortality", to_json(row.z_mortality)},
          {"significant_mortality",
           !row.t_mortality.degenerate && row.t_mortality.p < 0.05},
          {"significant_stay", !row.t_stay.degenerate && row.t_stay.p < 0.05},
          {"empty", row.empty},
          {"flags", row.flags}};
}

inline nlohmann::json to_json(const OutcomeReport& r) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    models.push_back({{"model", m.model},
                      {"followers", to_json(m.followers)},
                      {"non_followers", to_json(m.non_followers)}});
  }
  return {{"tau", r.tau}, {"baseline", to_json(r.baseline)}, {"models", std::move(models)}};
}

}  // namespace heparl
