#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "heparl/actions.hpp"
#include "heparl/errors.hpp"
#include "heparl/scoring.hpp"
#include "heparl/trajectory.hpp"

namespace heparl {

enum class StateMode { Tabular, Vector };
enum class ScoreKind { Sofa, Cxsofa };

inline constexpr int kNumScalarStates = 25;  // discrete SOFA totals 0..24

using StateVec = std::array<double, 6>;

inline std::string to_string(ScoreKind k) { return k == ScoreKind::Sofa ? "sofa" : "cxsofa"; }

inline ScoreKind score_kind_from_string(const std::string& s) {
  if (s == "sofa") return ScoreKind::Sofa;
  if (s == "cxsofa") return ScoreKind::Cxsofa;
  throw ValidationError("unknown score kind '" + s + "' (expected sofa or cxsofa)");
}

// Picks the config the kind refers to; custom configs may be passed explicitly.
inline const scoring::ScoreConfig& default_config(ScoreKind kind) {
  return kind == ScoreKind::Sofa ? scoring::sofa_discrete_config()
                                 : scoring::cxsofa_paper_config();
}

struct RewardSpec {
  ScoreKind kind = ScoreKind::Cxsofa;
  double death_penalty = -15.0;
  double gamma = 0.99;
};

inline void validate(const RewardSpec& spec) {
  if (spec.death_penalty > 0.0) throw ValidationError("death penalty must be <= 0");
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0)) {
    throw ValidationError("gamma must lie in (0, 1]");
  }
}

inline int encode_scalar(const VitalSigns& v) { return scoring::sofa_discrete(v); }

inline StateVec encode_vector(const VitalSigns& v, const scoring::ScoreConfig& cfg) {
  return scoring::component_scores(v, cfg);
}

// Reward basis: the total severity under the chosen kind (discrete total for
// sofa, continuous total for cxsofa).
inline double state_score(const VitalSigns& v, ScoreKind kind, const scoring::ScoreConfig& cfg) {
  return kind == ScoreKind::Sofa ? static_cast<double>(scoring::sofa_discrete(v))
                                 : scoring::cxsofa(v, cfg);
}

inline double reward(double score_t, double score_next, bool died, const RewardSpec& spec) {
  if (!std::isfinite(score_t) || !std::isfinite(score_next)) {
    throw ValidationError("reward inputs must be finite scores");
  }
  if (died) return spec.death_penalty;
  return score_t - score_next;
}

template <typename S>
struct Transition {
  S s{};
  int a = 0;
  double r = 0.0;
  S s_next{};
  bool done = false;
  bool died = false;

  bool operator==(const Transition&) const = default;
};

// One transition per consecutive step pair; done only on the final pair; the
// final reward of a death episode is the penalty.
template <typename S, typename Encode>
std::vector<Transition<S>> build_transitions_impl(const Cohort& cohort, const RewardSpec& spec,
                                                  const scoring::ScoreConfig& cfg,
                                                  Encode&& encode) {
  validate(spec);
  std::vector<Transition<S>> out;
  for (const Episode& ep : cohort.episodes) {
    const size_t n = ep.steps.size();
    for (size_t t = 0; t + 1 < n; ++t) {
      const Step& cur = ep.steps[t];
      const Step& nxt = ep.steps[t + 1];
      Transition<S> tr;
      tr.s = encode(cur.vitals);
      tr.a = cur.action;
      tr.s_next = encode(nxt.vitals);
      tr.done = nxt.terminal;
      tr.died = nxt.terminal && nxt.died_at_end;
      tr.r = reward(state_score(cur.vitals, spec.kind, cfg),
                    state_score(nxt.vitals, spec.kind, cfg), tr.died, spec);
      out.push_back(std::move(tr));
    }
  }
  return out;
}

// Per-decision-step rewards of one episode (length steps-1), mirroring the
// transition construction above.
inline std::vector<double> episode_rewards(const Episode& ep, const RewardSpec& spec,
                                           const scoring::ScoreConfig& cfg) {
  validate(spec);
  if (ep.steps.size() < 2) {
    throw ValidationError("episode " + ep.episode_id + " has no reward step");
  }
  std::vector<double> out;
  out.reserve(ep.steps.size() - 1);
  for (size_t t = 0; t + 1 < ep.steps.size(); ++t) {
    const Step& nxt = ep.steps[t + 1];
    const bool died = nxt.terminal && nxt.died_at_end;
    out.push_back(reward(state_score(ep.steps[t].vitals, spec.kind, cfg),
                         state_score(nxt.vitals, spec.kind, cfg), died, spec));
  }
  return out;
}

inline std::vector<double> episode_rewards(const Episode& ep, const RewardSpec& spec) {
  return episode_rewards(ep, spec, default_config(spec.kind));
}

inline std::vector<Transition<int>> build_transitions_tabular(const Cohort& cohort,
                                                              const RewardSpec& spec) {
  return build_transitions_impl<int>(cohort, spec, default_config(spec.kind),
                                     [](const VitalSigns& v) { return encode_scalar(v); });
}

inline std::vector<Transition<StateVec>> build_transitions_vector(
    const Cohort& cohort, const RewardSpec& spec, const scoring::ScoreConfig& cfg) {
  return build_transitions_impl<StateVec>(
      cohort, spec, cfg, [&cfg](const VitalSigns& v) { return encode_vector(v, cfg); });
}

inline std::vector<Transition<StateVec>> build_transitions_vector(const Cohort& cohort,
                                                                  const RewardSpec& spec) {
  return build_transitions_vector(cohort, spec, default_config(spec.kind));
}

}  // namespace heparl
