#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/errors.hpp"
#include "heparl/learners.hpp"
#include "heparl/mdp.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/util.hpp"

namespace heparl {

// ---------------------------------------------------------------------------
// Good/bad episode partition by the stepwise effectiveness rate.
// ---------------------------------------------------------------------------

struct Partition {
  std::vector<Episode> good;
  std::vector<Episode> bad;
  double tau = 0.7;
};

// An episode is good when at least tau of its reward steps are non-negative;
// a death penalty step is negative and therefore always counts against.
inline Partition classify_episodes(const Cohort& cohort, const RewardSpec& spec, double tau,
                                   const scoring::ScoreConfig& cfg) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("classify_episodes: tau must lie in [0,1]");
  }
  Partition part;
  part.tau = tau;
  for (const Episode& ep : cohort.episodes) {
    const auto rewards = episode_rewards(ep, spec, cfg);
    size_t n_good = 0;
    for (double r : rewards) {
      if (r >= 0.0) ++n_good;
    }
    const double rho = static_cast<double>(n_good) / static_cast<double>(rewards.size());
    (rho >= tau ? part.good : part.bad).push_back(ep);
  }
  return part;
}

inline Partition classify_episodes(const Cohort& cohort, const RewardSpec& spec, double tau) {
  return classify_episodes(cohort, spec, tau, default_config(spec.kind));
}

// ---------------------------------------------------------------------------
// Action similarity and the treatment effect comparison matrix.
// ---------------------------------------------------------------------------

inline double similarity(int a, int a_ref) {
  if (a < 0 || a >= kNumActions || a_ref < 0 || a_ref >= kNumActions) {
    throw ValidationError("similarity: action index outside 0..4");
  }
  const int d = a > a_ref ? a - a_ref : a_ref - a;
  return 1.0 / (1.0 + 0.25 * d);
}

struct Tecm {
  double og = 0.0;
  double wg = 0.0;
  double ob = 0.0;
  double wb = 0.0;
  int n_opt_good = 0;  // good episodes matching the optimal policy
  int n_wrt_good = 0;  // good episodes matching the worst policy
  int n_opt_bad = 0;
  int n_wrt_bad = 0;
  double tau = 0.7;

  bool operator==(const Tecm&) const = default;
};

// Policy queries straight from vitals: tabular Q functions read the discrete
// total, vector ones the component scores under cfg.
inline int policy_best_for(const AnyQ& q, const VitalSigns& v, const scoring::ScoreConfig& cfg) {
  return q.is_tabular() ? policy_best(q, encode_scalar(v))
                        : policy_best(q, encode_vector(v, cfg));
}

inline int policy_worst_for(const AnyQ& q, const VitalSigns& v,
                            const scoring::ScoreConfig& cfg) {
  return q.is_tabular() ? policy_worst(q, encode_scalar(v))
                        : policy_worst(q, encode_vector(v, cfg));
}

namespace detail {

struct EpisodeSims {
  double mean_o = 0.0;  // mean similarity to the policy's best actions
  double mean_w = 0.0;  // mean similarity to the policy's worst actions
  double rho = 0.0;     // fraction of steps where the side's own sim dominates
};

// good_side counts sim_o >= sim_w per step; the bad side counts the reverse.
// Ties land on the side doing the counting, so rho complements are exact.
inline EpisodeSims eval_episode(const Episode& ep, const AnyQ& q,
                                const scoring::ScoreConfig& cfg, bool good_side) {
  if (ep.steps.size() < 2) {
    throw ValidationError("episode " + ep.episode_id + " has no decision step");
  }
  const size_t n = ep.steps.size() - 1;
  EpisodeSims out;
  size_t n_pref = 0;
  for (size_t t = 0; t < n; ++t) {
    const Step& step = ep.steps[t];
    const auto vals = q.is_tabular() ? q.values(encode_scalar(step.vitals))
                                     : q.values(encode_vector(step.vitals, cfg));
    const double sim_o = similarity(step.action, argmax_low(vals));
    const double sim_w = similarity(step.action, argmin_low(vals));
    out.mean_o += sim_o;
    out.mean_w += sim_w;
    if (good_side ? sim_o >= sim_w : sim_w >= sim_o) ++n_pref;
  }
  out.mean_o /= static_cast<double>(n);
  out.mean_w /= static_cast<double>(n);
  out.rho = static_cast<double>(n_pref) / static_cast<double>(n);
  return out;
}

}  // namespace detail

// Cell values: mean per-episode similarity times mean per-episode rate over
// the episodes assigned to that cell; an empty cell stays 0.
inline Tecm tecm(const Partition& part, const AnyQ& q, double tau,
                 const scoring::ScoreConfig& cfg, int jobs = 1) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("tecm: tau must lie in [0,1]");
  Tecm t;
  t.tau = tau;

  std::vector<detail::EpisodeSims> good_evals(part.good.size());
  std::vector<detail::EpisodeSims> bad_evals(part.bad.size());
  parallel_for(part.good.size(), jobs,
               [&](size_t i) { good_evals[i] = detail::eval_episode(part.good[i], q, cfg, true); });
  parallel_for(part.bad.size(), jobs,
               [&](size_t i) { bad_evals[i] = detail::eval_episode(part.bad[i], q, cfg, false); });

  double og_sim = 0, og_rho = 0, wg_sim = 0, wg_rho = 0;
  for (const auto& e : good_evals) {
    if (e.rho > tau) {
      og_sim += e.mean_o;
      og_rho += e.rho;
      ++t.n_opt_good;
    } else {
      wg_sim += e.mean_w;
      wg_rho += 1.0 - e.rho;
      ++t.n_wrt_good;
    }
  }
  double ob_sim = 0, ob_rho = 0, wb_sim = 0, wb_rho = 0;
  for (const auto& e : bad_evals) {
    if (e.rho > tau) {
      wb_sim += e.mean_w;
      wb_rho += e.rho;
      ++t.n_wrt_bad;
    } else {
      ob_sim += e.mean_o;
      ob_rho += 1.0 - e.rho;
      ++t.n_opt_bad;
    }
  }
  if (t.n_opt_good > 0) t.og = (og_sim / t.n_opt_good) * (og_rho / t.n_opt_good);
  if (t.n_wrt_good > 0) t.wg = (wg_sim / t.n_wrt_good) * (wg_rho / t.n_wrt_good);
  if (t.n_opt_bad > 0) t.ob = (ob_sim / t.n_opt_bad) * (ob_rho / t.n_opt_bad);
  if (t.n_wrt_bad > 0) t.wb = (wb_sim / t.n_wrt_bad) * (wb_rho / t.n_wrt_bad);
  return t;
}

inline Tecm tecm(const Partition& part, const Checkpoint& ck, double tau, int jobs = 1) {
  return tecm(part, ck.q, tau, default_config(ck.kind), jobs);
}

// ---------------------------------------------------------------------------
// Comprehensive confidence and bias.
// ---------------------------------------------------------------------------

inline constexpr double kSigmaFloor = 1e-9;

inline bool sigma_floored(const Tecm& t) { return t.og < kSigmaFloor || t.wg < kSigmaFloor; }

// sigma = harmonic-mean(og, wb) / harmonic-mean(og, wg); undefined when og or
// wg vanishes, reported as the +infinity sentinel instead of dividing.
inline double confidence(const Tecm& t) {
  if (sigma_floored(t)) return std::numeric_limits<double>::infinity();
  return (2.0 * t.og * t.wb / (t.og + t.wb)) * ((t.og + t.wg) / (2.0 * t.og * t.wg));
}

inline double bias(const Tecm& t) { return (t.og - t.wg) - (t.wb - t.ob); }

struct AssessmentReport {
  Tecm tecm;
  double sigma = 0.0;
  double mu = 0.0;
  double o_gap = 0.0;  // og - ob
  double w_gap = 0.0;  // wb - wg
  int checkpoint_epoch = 0;
  std::string checkpoint_id;
  std::vector<std::string> flags;
};

inline AssessmentReport assess_checkpoint(const Checkpoint& ck, const Partition& part,
                                          double tau, int jobs = 1) {
  AssessmentReport r;
  r.tecm = tecm(part, ck, tau, jobs);
  r.sigma = confidence(r.tecm);
  r.mu = bias(r.tecm);
  r.o_gap = r.tecm.og - r.tecm.ob;
  r.w_gap = r.tecm.wb - r.tecm.wg;
  r.checkpoint_epoch = ck.epoch;
  r.checkpoint_id = to_string(ck.algo) + "-" + to_string(ck.kind) + "-e" + std::to_string(ck.epoch);
  if (r.tecm.n_opt_good == 0) r.flags.push_back("og cell empty (no opt-pol good episodes)");
  if (r.tecm.n_wrt_good == 0) r.flags.push_back("wg cell empty (no wrt-pol good episodes)");
  if (r.tecm.n_opt_bad == 0) r.flags.push_back("ob cell empty (no opt-pol bad episodes)");
  if (r.tecm.n_wrt_bad == 0) r.flags.push_back("wb cell empty (no wrt-pol bad episodes)");
  if (sigma_floored(r.tecm)) {
    r.flags.push_back("sigma reported as +inf (og or wg below the 1e-9 floor)");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Ordering of reports and checkpoint selection.
// ---------------------------------------------------------------------------

enum class Ordering { First, Second };
enum class Preference { Aggressive, Conservative };

inline std::string to_string(Preference p) {
  return p == Preference::Aggressive ? "aggressive" : "conservative";
}

inline Preference preference_from_string(const std::string& s) {
  if (s == "aggressive") return Preference::Aggressive;
  if (s == "conservative") return Preference::Conservative;
  throw ValidationError("unknown preference '" + s + "' (expected aggressive or conservative)");
}

// Rule 1: a report whose O-gap and W-gap both dominate wins (exact ties keep
// the first). Rule 2: crossed gaps are ordered by sigma. Rule 3: under the
// conservative preference the lower-sigma report wins rule 2 instead.
inline Ordering compare(const AssessmentReport& a, const AssessmentReport& b, Preference pref) {
  const bool a_dominates = a.o_gap >= b.o_gap && a.w_gap >= b.w_gap;
  const bool b_dominates = b.o_gap >= a.o_gap && b.w_gap >= a.w_gap;
  if (a_dominates) return Ordering::First;
  if (b_dominates) return Ordering::Second;
  Ordering by_sigma = b.sigma > a.sigma ? Ordering::Second : Ordering::First;
  if (pref == Preference::Conservative && a.sigma != b.sigma) {
    by_sigma = by_sigma == Ordering::First ? Ordering::Second : Ordering::First;
  }
  return by_sigma;
}

struct SelectionConfig {
  double tau = 0.7;  // lowest effectiveness rate
  int eta = 50;      // patience in consecutive non-improving checkpoints
  Preference preference = Preference::Aggressive;
};

inline void validate(const SelectionConfig& cfg) {
  if (!(cfg.tau >= 0.5 && cfg.tau <= 1.0)) {
    throw ValidationError("selection: tau must lie in [0.5,1]");
  }
  if (cfg.eta < 1) throw ValidationError("selection: eta must be >= 1");
}

struct SelectionResult {
  size_t best_index = 0;  // into the evaluated (= report) sequence
  std::vector<AssessmentReport> reports;
  bool stopped_early = false;
};

// Patience fold shared by the checkpoint selector and its tests: evaluates
// reports lazily in order, keeps the incumbent, and stops after eta
// consecutive challengers fail to win.
template <typename MakeReport>
SelectionResult select_fold(size_t count, int eta, Preference pref, MakeReport&& make_report) {
  if (count == 0) throw ValidationError("selection: no checkpoints to evaluate");
  SelectionResult out;
  out.reports.push_back(make_report(size_t{0}));
  int stale = 0;
  for (size_t i = 1; i < count; ++i) {
    out.reports.push_back(make_report(i));
    if (compare(out.reports[out.best_index], out.reports.back(), pref) == Ordering::Second) {
      out.best_index = i;
      stale = 0;
    } else if (++stale >= eta) {
      out.stopped_early = i + 1 < count;
      break;
    }
  }
  return out;
}

inline SelectionResult select_checkpoint(const std::vector<Checkpoint>& checkpoints,
                                         const Partition& part, const SelectionConfig& cfg,
                                         int jobs = 1) {
  validate(cfg);
  return select_fold(checkpoints.size(), cfg.eta, cfg.preference, [&](size_t i) {
    return assess_checkpoint(checkpoints[i], part, cfg.tau, jobs);
  });
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Tecm& t) {
  return {{"og", t.og},
          {"wg", t.wg},
          {"ob", t.ob},
          {"wb", t.wb},
          {"n_opt_good", t.n_opt_good},
          {"n_wrt_good", t.n_wrt_good},
          {"n_opt_bad", t.n_opt_bad},
          {"n_wrt_bad", t.n_wrt_bad},
          {"tau", t.tau}};
}

inline nlohmann::json to_json(const AssessmentReport& r) {
  nlohmann::json j{{"tecm", to_json(r.tecm)},
                   {"mu", r.mu},
                   {"o_gap", r.o_gap},
                   {"w_gap", r.w_gap},
                   {"checkpoint_epoch", r.checkpoint_epoch},
                   {"checkpoint_id", r.checkpoint_id},
                   {"flags", r.flags}};
  if (std::isinf(r.sigma)) {
    j["sigma"] = "inf";
  } else {
    j["sigma"] = r.sigma;
  }
  return j;
}

}  // namespace heparl
