#pragma once

#include <array>
#include <string>

#include "heparl/errors.hpp"

namespace heparl {

inline constexpr int kNumActions = 5;

// UFH dose bins (U/kg/h): 0 | (0,1.38] | (1.38,1.88] | (1.88,3.5] | >3.5.
// Right-closed as printed; a dose of exactly 0 is its own bin.
inline constexpr std::array<double, 4> kDoseBinUpper = {0.0, 1.38, 1.88, 3.5};

inline int bin_action(double dose) {
  if (!(dose >= 0.0)) {
    throw ValidationError("heparin dose must be a non-negative number, got " +
                          std::to_string(dose));
  }
  if (dose == 0.0) return 0;
  if (dose <= 1.38) return 1;
  if (dose <= 1.88) return 2;
  if (dose <= 3.5) return 3;
  return 4;
}

}  // namespace heparl
