#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/actions.hpp"
#include "heparl/errors.hpp"
#include "heparl/scoring.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/util.hpp"

namespace heparl {

// ---------------------------------------------------------------------------
// Synthetic cohort generator. A hidden dose policy, tiered on the continuous
// coagulation component f2, drives platelet and GCS dynamics; death hazard is
// a logistic function of the total severity score; physicians are a mixture
// of skilled (mostly on-policy) and unskilled (mostly uniform) prescribers.
// The ground-truth policy is emitted alongside so recovery is testable.
// ---------------------------------------------------------------------------

struct SynthParams {
  int patients = 500;
  double mean_len = 24.0;        // target episode length in 4h windows
  double dose_response = 1.0;    // strength of the action effect on dynamics
  double base_mortality = 0.06;  // scales the per-step death hazard
};

inline void validate(const SynthParams& p) {
  if (p.patients < 1) throw ValidationError("synth: patient count must be >= 1");
  if (p.mean_len < 2.0) throw ValidationError("synth: mean episode length must be >= 2");
  if (p.dose_response < 0.0) throw ValidationError("synth: dose-response must be >= 0");
  if (!(p.base_mortality >= 0.0 && p.base_mortality <= 1.0)) {
    throw ValidationError("synth: base mortality must lie in [0, 1]");
  }
}

// Optimal heparin bin as a function of the coagulation severity f2 in [0,4]:
// the sicker the coagulation, the higher the dose tier.
struct GroundTruthPolicy {
  std::array<double, 4> f2_cuts = {0.8, 1.6, 2.4, 3.2};

  int action_for_f2(double f2) const {
    int a = 0;
    for (double cut : f2_cuts) {
      if (f2 >= cut) ++a;
    }
    return a;
  }

  int action_for(const VitalSigns& v) const {
    return action_for_f2(scoring::component_score(v, 2, scoring::cxsofa_paper_config()));
  }
};

inline nlohmann::json to_json(const GroundTruthPolicy& gt) {
  return nlohmann::json{{"type", "f2-tier"},
                        {"f2_cuts", gt.f2_cuts},
                        {"actions", {0, 1, 2, 3, 4}}};
}

inline GroundTruthPolicy ground_truth_from_json(const nlohmann::json& j) {
  if (j.value("type", "") != "f2-tier") {
    throw DataError("ground-truth policy: unknown type");
  }
  GroundTruthPolicy gt;
  const auto cuts = j.at("f2_cuts").get<std::vector<double>>();
  if (cuts.size() != 4) throw DataError("ground-truth policy: expected 4 cuts");
  std::copy(cuts.begin(), cuts.end(), gt.f2_cuts.begin());
  return gt;
}

struct SynthResult {
  Cohort cohort;
  GroundTruthPolicy ground_truth;
};

namespace detail {

template <typename Rng>
double dose_for_action(int a, Rng& rng) {
  switch (a) {
    case 0:
      return 0.0;
    case 1:
      return rand_uniform(rng, 0.2, 1.38);
    case 2:
      return rand_uniform(rng, 1.4, 1.88);
    case 3:
      return rand_uniform(rng, 1.9, 3.5);
    default:
      return rand_uniform(rng, 3.6, 6.0);
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline SynthResult synth_cohort(const SynthParams& params, std::uint64_t seed) {
  validate(params);
  const auto& cfg = scoring::cxsofa_paper_config();
  GroundTruthPolicy gt;

  Cohort cohort;
  cohort.provenance = Provenance::Synthetic;
  cohort.seed = seed;
  cohort.episodes.reserve(static_cast<size_t>(params.patients));

  for (int p = 0; p < params.patients; ++p) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(p)));

    // Per-patient constants: oxygenation/liver/renal state varies across the
    // cohort but is static within a stay; vasoactive drugs are never given.
    const double pf = rand_uniform(rng, 300, 500);
    const double bili = rand_uniform(rng, 5, 30);
    const double creat = rand_uniform(rng, 50, 120);
    const double uo = rand_uniform(rng, 1500, 2500);
    double platelets = rand_uniform(rng, 20, 250);
    double gcs = rand_int(rng, 6, 15);
    double mbp = rand_uniform(rng, 65, 100);
    const bool skilled = rand_bernoulli(rng, 0.65);
    const int target_len = std::min(200, 2 + rand_poisson(rng, params.mean_len - 2.0));

    auto make_vitals = [&]() {
      VitalSigns v;
      v[0] = pf;
      v[1] = pf;
      v[2] = platelets;
      v[3] = bili;
      v[4] = mbp;
      v[5] = v[6] = v[7] = v[8] = 0.0;
      v[9] = gcs;
      v[10] = creat;
      v[11] = uo;
      return v;
    };

    Episode ep;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%05d", p);
    ep.patient_id = buf;
    ep.episode_id = ep.patient_id + "-r0";

    auto physician_action = [&](int g) {
      if (skilled) {
        if (rand_bernoulli(rng, 0.85)) return g;
        return std::clamp(g + (rand_bernoulli(rng, 0.5) ? 1 : -1), 0, kNumActions - 1);
      }
      return rand_bernoulli(rng, 0.7) ? rand_int(rng, 0, kNumActions - 1) : g;
    };

    VitalSigns cur = make_vitals();
    bool died = false;
    for (int t = 0;; ++t) {
      const int g = gt.action_for(cur);
      const int a = physician_action(g);
      const double dose = detail::dose_for_action(a, rng);
      ep.steps.push_back(make_step(t, cur, dose));

      // Advance the dynamic vitals under treatment quality e in [0, 1].
      const double e = 1.0 - 0.25 * std::abs(a - g);
      const double push = params.dose_response * (e - 0.45);
      platelets = std::clamp(
          platelets + 0.05 * (70.0 - platelets) + 14.0 * push + rand_normal(rng, 0, 4), 5.0,
          350.0);
      const double pu = std::clamp(0.2 + 0.25 * push, 0.02, 0.7);
      const double pd = std::clamp(0.2 - 0.25 * push, 0.02, 0.7);
      const double u = rand_u01(rng);
      if (u < pu) {
        gcs = std::min(gcs + 1, 15.0);
      } else if (u < pu + pd) {
        gcs = std::max(gcs - 1, 3.0);
      }
      mbp = std::clamp(mbp + 0.1 * (82.0 - mbp) + rand_normal(rng, 0, 3), 40.0, 140.0);
      cur = make_vitals();

      const double hazard =
          params.base_mortality * detail::sigmoid(scoring::cxsofa(cur, cfg) - 11.0);
      died = rand_bernoulli(rng, hazard);
      if (died || t + 2 >= target_len) {
        const double final_dose = detail::dose_for_action(physician_action(gt.action_for(cur)), rng);
        ep.steps.push_back(make_step(t + 1, cur, final_dose, true, died));
        break;
      }
    }
    ep.outcome = died ? Outcome::Died : Outcome::Survived;
    ep.los_days = static_cast<double>(ep.steps.size()) / 6.0;
    cohort.episodes.push_back(std::move(ep));
  }
  return SynthResult{std::move(cohort), gt};
}

}  // namespace heparl
