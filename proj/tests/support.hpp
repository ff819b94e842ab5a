#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eulerspec/eulerspec.hpp"

namespace support {

using namespace eulerspec;

inline IndexSet index_of(const StreamField& f, int resolution = 64) {
  return build_index_set(f, find_fixed_points(f, resolution), resolution);
}

inline std::vector<PeriodFunction> periods_of(const StreamField& f, const IndexSet& idx, int n = 24) {
  std::vector<PeriodFunction> out;
  for (const auto& fam : idx.families) out.push_back(sample_period_function(f, fam, n));
  return out;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

/// Polyline of the orbit through the seed, four points per accepted step.
inline std::vector<Vec2> orbit_polyline(const StreamField& f, Vec2 seed) {
  const FieldScales sc = field_scales(f);
  return detail::period_ode_full(f, seed, sc, Tolerances{}, 4).trace.polyline;
}

}  // namespace support
