#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "heparl/actions.hpp"
#include "heparl/errors.hpp"
#include "heparl/vitals.hpp"

namespace heparl {

inline constexpr double kWindowMinutes = 240.0;

inline VitalSigns absent_vitals() {
  VitalSigns v;
  v.x.fill(std::numeric_limits<double>::quiet_NaN());
  return v;
}

// One ingested measurement row. NaN marks an absent vital/dose.
struct RawRecord {
  std::string patient_id;
  double t_min = 0.0;  // minutes since admission
  VitalSigns vitals = absent_vitals();
  double dose = std::numeric_limits<double>::quiet_NaN();  // U/kg/h
  std::optional<double> death_min;
  double discharge_min = 0.0;
};

struct Step {
  int window = 0;
  VitalSigns vitals;
  double dose = 0.0;
  int action = 0;
  bool terminal = false;
  bool died_at_end = false;

  bool operator==(const Step&) const = default;
};

inline Step make_step(int window, const VitalSigns& v, double dose, bool terminal = false,
                      bool died_at_end = false) {
  return Step{window, v, dose, bin_action(dose), terminal, died_at_end};
}

enum class Outcome { Survived, Died };

struct Episode {
  std::string patient_id;
  std::string episode_id;
  std::vector<Step> steps;
  Outcome outcome = Outcome::Survived;
  double los_days = 0.0;
};

enum class Provenance { Ingested, Synthetic };

struct Cohort {
  std::vector<Episode> episodes;
  Provenance provenance = Provenance::Ingested;
  std::optional<std::uint64_t> seed;
};

// ---------------------------------------------------------------------------
// Windowing: one slot per 4h window, anchored at each patient's first record
// (the cohorted rows start at sepsis onset), spanning to discharge or death.
// ---------------------------------------------------------------------------

struct WindowSlot {
  VitalSigns vitals = absent_vitals();
  double dose = std::numeric_limits<double>::quiet_NaN();
};

struct PatientGrid {
  std::string patient_id;
  double t0_min = 0.0;
  std::vector<WindowSlot> slots;
  std::optional<double> death_min;
  double discharge_min = 0.0;
};

struct WindowizeResult {
  std::vector<PatientGrid> grids;
  std::vector<std::pair<std::string, std::string>> excluded;  // patient id, reason
};

inline WindowizeResult windowize(const std::vector<RawRecord>& records,
                                 double window_minutes = kWindowMinutes) {
  if (window_minutes <= 0) throw ValidationError("window length must be positive");
  std::map<std::string, std::vector<const RawRecord*>> by_patient;
  for (const auto& r : records) by_patient[r.patient_id].push_back(&r);

  WindowizeResult out;
  for (auto& [pid, rows] : by_patient) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRecord* a, const RawRecord* b) { return a->t_min < b->t_min; });
    PatientGrid g;
    g.patient_id = pid;
    g.t0_min = rows.front()->t_min;
    for (const RawRecord* r : rows) {
      if (r->death_min && !g.death_min) g.death_min = r->death_min;
      if (r->discharge_min > 0 && g.discharge_min == 0) g.discharge_min = r->discharge_min;
    }
    const double t_end = g.death_min ? *g.death_min : g.discharge_min;
    const int windows = static_cast<int>(std::floor((t_end - g.t0_min) / window_minutes)) + 1;
    if (windows < 1) {
      out.excluded.emplace_back(pid, "zero windows between onset and discharge/death");
      continue;
    }
    g.slots.resize(static_cast<size_t>(windows));
    for (const RawRecord* r : rows) {
      const int w = static_cast<int>(std::floor((r->t_min - g.t0_min) / window_minutes));
      if (w < 0 || w >= windows) continue;  // beyond discharge/death span
      WindowSlot& slot = g.slots[static_cast<size_t>(w)];
      for (int i = 0; i < kNumVitals; ++i) {
        if (!std::isnan(r->vitals[i])) slot.vitals[i] = r->vitals[i];  // last value wins
      }
      if (!std::isnan(r->dose)) slot.dose = r->dose;
    }
    out.grids.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Imputation: per vital, interior gaps are linearly interpolated, trailing
// gaps carry the last observation forward, leading gaps stay missing (no
// backward extrapolation). The dose is never imputed.
// ---------------------------------------------------------------------------

inline PatientGrid impute(PatientGrid g) {
  const int n = static_cast<int>(g.slots.size());
  for (int i = 0; i < kNumVitals; ++i) {
    int last_obs = -1;
    for (int w = 0; w < n; ++w) {
      if (std::isnan(g.slots[static_cast<size_t>(w)].vitals[i])) continue;
      if (last_obs >= 0 && w > last_obs + 1) {
        const double lo = g.slots[static_cast<size_t>(last_obs)].vitals[i];
        const double hi = g.slots[static_cast<size_t>(w)].vitals[i];
        for (int k = last_obs + 1; k < w; ++k) {
          const double frac = static_cast<double>(k - last_obs) / (w - last_obs);
          g.slots[static_cast<size_t>(k)].vitals[i] = lo + frac * (hi - lo);
        }
      }
      last_obs = w;
    }
    for (int w = last_obs + 1; w < n && last_obs >= 0; ++w) {
      g.slots[static_cast<size_t>(w)].vitals[i] =
          g.slots[static_cast<size_t>(last_obs)].vitals[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Exclusion and assembly: windows missing any scoring input or the dose are
// dropped whole; contiguous survivors of length >= 2 become episodes.
// ---------------------------------------------------------------------------

struct AssembleResult {
  std::vector<Episode> episodes;
  int windows_total = 0;
  int windows_excluded = 0;
  int runs_too_short = 0;
};

inline AssembleResult exclude_and_assemble(const PatientGrid& g) {
  AssembleResult out;
  const int n = static_cast<int>(g.slots.size());
  out.windows_total = n;

  std::vector<int> keep;
  for (int w = 0; w < n; ++w) {
    const WindowSlot& s = g.slots[static_cast<size_t>(w)];
    const bool complete = is_valid(s.vitals) && std::isfinite(s.dose) && s.dose >= 0.0;
    if (complete) {
      keep.push_back(w);
    } else {
      ++out.windows_excluded;
    }
  }

  std::vector<std::vector<int>> runs;
  for (int w : keep) {
    if (runs.empty() || runs.back().back() != w - 1) runs.emplace_back();
    runs.back().push_back(w);
  }

  const bool died = g.death_min.has_value();
  const double t_end = g.death_min ? *g.death_min : g.discharge_min;
  int run_idx = 0;
  int last_kept_run = -1;
  for (size_t ri = 0; ri < runs.size(); ++ri) {
    if (runs[ri].size() >= 2) last_kept_run = static_cast<int>(ri);
  }
  for (size_t ri = 0; ri < runs.size(); ++ri) {
    const auto& run = runs[ri];
    if (run.size() < 2) {
      ++out.runs_too_short;
      continue;
    }
    Episode ep;
    ep.patient_id = g.patient_id;
    ep.episode_id = g.patient_id + "-r" + std::to_string(run_idx++);
    const bool final_run = static_cast<int>(ri) == last_kept_run;
    for (size_t k = 0; k < run.size(); ++k) {
      const int w = run[k];
      const WindowSlot& s = g.slots[static_cast<size_t>(w)];
      const bool last = k + 1 == run.size();
      ep.steps.push_back(make_step(w, s.vitals, s.dose, last, last && final_run && died));
    }
    ep.outcome = (final_run && died) ? Outcome::Died : Outcome::Survived;
    ep.los_days = t_end / 1440.0;
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation of extremely long traces.
// ---------------------------------------------------------------------------

inline std::vector<Episode> segment_long(const Episode& ep, int max_len) {
  if (max_len < 2) throw ValidationError("segment max_len must be >= 2");
  const int n = static_cast<int>(ep.steps.size());
  if (n <= max_len) return {ep};

  std::vector<int> sizes;
  int remaining = n;
  while (remaining > 0) {
    const int take = std::min(max_len, remaining);
    sizes.push_back(take);
    remaining -= take;
  }
  // A trailing chunk of one step cannot stand alone (episodes need at least
  // one transition): borrow a step from the previous chunk, or merge when the
  // previous chunk cannot spare one (only possible at max_len == 2).
  if (sizes.back() == 1) {
    if (sizes[sizes.size() - 2] > 2) {
      sizes[sizes.size() - 2] -= 1;
      sizes.back() += 1;
    } else {
      sizes[sizes.size() - 2] += 1;
      sizes.pop_back();
    }
  }

  std::vector<Episode> chunks;
  int offset = 0;
  for (size_t ci = 0; ci < sizes.size(); ++ci) {
    Episode chunk;
    chunk.patient_id = ep.patient_id;
    chunk.episode_id = ep.episode_id + "-c" + std::to_string(ci);
    chunk.los_days = ep.los_days;
    const bool final_chunk = ci + 1 == sizes.size();
    for (int k = 0; k < sizes[ci]; ++k) {
      Step s = ep.steps[static_cast<size_t>(offset + k)];
      const bool last = k + 1 == sizes[ci];
      s.terminal = last;
      s.died_at_end = last && final_chunk && s.died_at_end;
      if (!last) s.died_at_end = false;
      chunk.steps.push_back(std::move(s));
    }
    chunk.outcome = final_chunk ? ep.outcome : Outcome::Survived;
    offset += sizes[ci];
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Patient-level train/validation split.
// ---------------------------------------------------------------------------

inline std::pair<Cohort, Cohort> split(const Cohort& cohort, double train_frac,
                                       std::uint64_t seed) {
  if (cohort.episodes.empty()) throw ValidationError("cannot split an empty cohort");
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw ValidationError("train fraction must lie strictly inside (0,1)");
  }
  std::vector<std::string> patients;
  for (const auto& ep : cohort.episodes) {
    if (std::find(patients.begin(), patients.end(), ep.patient_id) == patients.end()) {
      patients.push_back(ep.patient_id);
    }
  }
  std::sort(patients.begin(), patients.end());
  const auto p = static_cast<long long>(patients.size());
  const auto n_train = static_cast<long long>(std::llround(train_frac * static_cast<double>(p)));
  if (n_train < 1 || n_train >= p) {
    throw ValidationError("split would leave a side empty (" + std::to_string(p) +
                          " patients, train fraction " + std::to_string(train_frac) + ")");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::vector<std::string> train_ids(patients.begin(), patients.begin() + n_train);
  std::sort(train_ids.begin(), train_ids.end());

  Cohort train, valid;
  train.provenance = valid.provenance = cohort.provenance;
  train.seed = valid.seed = cohort.seed;
  for (const auto& ep : cohort.episodes) {
    const bool in_train =
        std::binary_search(train_ids.begin(), train_ids.end(), ep.patient_id);
    (in_train ? train : valid).episodes.push_back(ep);
  }
  return {std::move(train), std::move(valid)};
}

// ---------------------------------------------------------------------------
// Well-formedness validator, run after every pipeline stage in tests and on
// every cohort file load.
// ---------------------------------------------------------------------------

inline void validate_episode(const Episode& ep) {
  if (ep.steps.size() < 2) {
    throw DataError("episode " + ep.episode_id + ": needs at least 2 steps, has " +
                    std::to_string(ep.steps.size()));
  }
  for (size_t k = 0; k < ep.steps.size(); ++k) {
    const Step& s = ep.steps[k];
    const bool last = k + 1 == ep.steps.size();
    if (s.terminal != last) {
      throw DataError("episode " + ep.episode_id + ": terminal flag misplaced at step " +
                      std::to_string(k));
    }
    if (s.died_at_end && !s.terminal) {
      throw DataError("episode " + ep.episode_id + ": died_at_end on non-terminal step");
    }
    try {
      validate(s.vitals);
    } catch (const ScoringError& ex) {
      throw DataError("episode " + ep.episode_id + " step " + std::to_string(k) + ": " +
                      ex.what());
    }
    if (!(s.dose >= 0.0) || !std::isfinite(s.dose)) {
      throw DataError("episode " + ep.episode_id + " step " + std::to_string(k) +
                      ": invalid dose");
    }
    if (s.action != bin_action(s.dose)) {
      throw DataError("episode " + ep.episode_id + " step " + std::to_string(k) +
                      ": action inconsistent with dose bin");
    }
  }
  const bool died_flag = ep.steps.back().died_at_end;
  if (died_flag != (ep.outcome == Outcome::Died)) {
    throw DataError("episode " + ep.episode_id + ": outcome disagrees with died_at_end");
  }
}

inline void validate_cohort(const Cohort& cohort) {
  if (cohort.episodes.empty()) throw DataError("cohort is empty");
  std::vector<std::string> ids;
  ids.reserve(cohort.episodes.size());
  for (const auto& ep : cohort.episodes) {
    validate_episode(ep);
    ids.push_back(ep.episode_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("cohort contains duplicate episode ids");
  }
}

}  // namespace heparl
