#pragma once

#include <array>
#include <cmath>
#include <string>

#include "heparl/errors.hpp"

namespace heparl {

inline constexpr int kNumVitals = 12;

// Field order matches the x0..x11 layout used throughout: oxygenation ratios,
// platelets, bilirubin, MBP, the four vasoactive drugs, GCS, creatinine, UO.
inline constexpr std::array<const char*, kNumVitals> kVitalNames = {
    "pf_ratio_no_vent",  // x0, PaO2/FiO2 without ventilation
    "pf_ratio_vent",     // x1, PaO2/FiO2 with ventilation
    "platelets",         // x2, 10^3/uL
    "bilirubin",         // x3, umol/L
    "mean_bp",           // x4, mmHg
    "dopamine",          // x5, ug/kg/min
    "dobutamine",        // x6, ug/kg/min
    "epinephrine",       // x7, ug/kg/min
    "norepinephrine",    // x8, ug/kg/min
    "gcs",               // x9, 3..15
    "creatinine",        // x10, umol/L
    "urine_output",      // x11, mL/day
};

// Canonical units per field; empty for dimensionless ratios and GCS.
inline constexpr std::array<const char*, kNumVitals> kVitalUnits = {
    "", "", "10^3/uL", "umol/L", "mmHg", "ug/kg/min", "ug/kg/min", "ug/kg/min",
    "ug/kg/min", "", "umol/L", "mL/day",
};

inline int vital_index(const std::string& name) {
  for (int i = 0; i < kNumVitals; ++i) {
    if (name == kVitalNames[i]) return i;
  }
  throw ValidationError("unknown vital sign field: " + name);
}

struct VitalSigns {
  std::array<double, kNumVitals> x{};

  double& operator[](int i) { return x[static_cast<size_t>(i)]; }
  double operator[](int i) const { return x[static_cast<size_t>(i)]; }

  double pf_ratio_no_vent() const { return x[0]; }
  double pf_ratio_vent() const { return x[1]; }
  double platelets() const { return x[2]; }
  double bilirubin() const { return x[3]; }
  double mean_bp() const { return x[4]; }
  double dopamine() const { return x[5]; }
  double dobutamine() const { return x[6]; }
  double epinephrine() const { return x[7]; }
  double norepinephrine() const { return x[8]; }
  double gcs() const { return x[9]; }
  double creatinine() const { return x[10]; }
  double urine_output() const { return x[11]; }

  bool operator==(const VitalSigns&) const = default;
};

// Throws ScoringError naming the first invalid field. NaN marks an absent
// value; absence, negativity and out-of-range GCS all invalidate a record.
inline void validate(const VitalSigns& v) {
  for (int i = 0; i < kNumVitals; ++i) {
    const double val = v[i];
    if (std::isnan(val)) {
      throw ScoringError(std::string(kVitalNames[i]) + " (x" + std::to_string(i) +
                         ") is absent");
    }
    if (!std::isfinite(val)) {
      throw ScoringError(std::string(kVitalNames[i]) + " (x" + std::to_string(i) +
                         ") is not finite");
    }
    if (val < 0.0) {
      throw ScoringError(std::string(kVitalNames[i]) + " (x" + std::to_string(i) +
                         ") is negative");
    }
  }
  if (v.gcs() < 3.0 || v.gcs() > 15.0) {
    throw ScoringError("gcs (x9) outside [3, 15]");
  }
}

inline bool is_valid(const VitalSigns& v) {
  for (int i = 0; i < kNumVitals; ++i) {
    if (!std::isfinite(v[i]) || v[i] < 0.0) return false;
  }
  return v.gcs() >= 3.0 && v.gcs() <= 15.0;
}

}  // namespace heparl
