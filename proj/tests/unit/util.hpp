#pragma once

#include "tbell/qcore.hpp"

#include <cmath>
#include <vector>

namespace testutil {

inline double max_abs_diff(const tbell::qcore::Matrix2& a, const tbell::qcore::Matrix2& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// n points evenly spread over [0, 2 pi).
inline std::vector<double> phase_grid(int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(2.0 * tbell::qcore::kPi * i / n);
  return g;
}

}  // namespace testutil
