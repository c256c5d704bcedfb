#pragma once

// Admissible sets: a trapezoid-L2 ball for the control, a box for the shape.

#include <vector>

#include "railopt/error.hpp"
#include "railopt/forward.hpp"
#include "railopt/shape.hpp"

namespace railopt {

struct AdmissibleSets {
  double control_ball_radius = 10.0;
  std::vector<Interval> shape_box;
};

inline void validate(const AdmissibleSets& sets) {
  if (!(sets.control_ball_radius > 0.0)) throw ConfigError("control ball radius must be positive");
  for (const auto& b : sets.shape_box)
    if (!(b.lo < b.hi)) throw ConfigError("shape box intervals must satisfy lo < hi");
}

/// Radial projection onto the trapezoid-L2 ball of radius R1.
inline Vector project_control(const Vector& u, double radius, const TimeGrid& grid) {
  const double norm = control_l2_norm(u, grid);
  if (norm <= radius) return u;
  return (radius / norm) * u;
}

inline std::vector<double> project_shape(const std::vector<double>& r, const std::vector<Interval>& box) {
  std::vector<double> out(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) out[k] = box[k].clamp(r[k]);
  return out;
}

}  // namespace railopt
