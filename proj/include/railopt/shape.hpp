#pragma once

// Actuator influence functions b(x, r) and their parameter derivatives.
//
//   gaussian-bump  r = (c, s)     b = exp(-(x - c)^2 / (2 s^2))
//   cosine-patch   r = (c, l)     plateau 1 on |x - c| <= l - eps, zero beyond
//                                 l + eps, cosine blend of width 2 eps between
//   spline         r = (r_0..)    b = sum_k r_k psi_k(x), clamped cubic
//                                 B-splines on uniform knots over [0, 1]

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "railopt/error.hpp"
#include "railopt/model.hpp"

namespace railopt {

enum class ShapeFamily { gaussian_bump, cosine_patch, spline };

inline constexpr double kPatchBlend = 0.05;

inline std::string_view to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::gaussian_bump: return "gaussian-bump";
    case ShapeFamily::cosine_patch: return "cosine-patch";
    case ShapeFamily::spline: return "spline";
  }
  return "unknown";
}

inline std::optional<ShapeFamily> parse_shape_family(std::string_view name) {
  if (name == "gaussian-bump") return ShapeFamily::gaussian_bump;
  if (name == "cosine-patch") return ShapeFamily::cosine_patch;
  if (name == "spline") return ShapeFamily::spline;
  return std::nullopt;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  double clamp(double x) const { return std::clamp(x, lo, hi); }
};

struct ShapeParams {
  ShapeFamily family = ShapeFamily::gaussian_bump;
  std::vector<double> values;
  std::vector<Interval> bounds;

  std::size_t size() const { return values.size(); }
};

/// Structural checks on the family and its box; does not check membership.
inline void validate_shape_box(ShapeFamily family, const std::vector<Interval>& bounds) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCategory::invalid_shape, msg); };
  for (const auto& b : bounds)
    if (!(b.lo <= b.hi)) fail("shape bounds must satisfy lo <= hi");
  switch (family) {
    case ShapeFamily::gaussian_bump:
      if (bounds.size() != 2) fail("gaussian-bump takes 2 parameters (center, width)");
      if (!(bounds[1].lo > 0.0)) fail("gaussian-bump width bound must be positive");
      break;
    case ShapeFamily::cosine_patch:
      if (bounds.size() != 2) fail("cosine-patch takes 2 parameters (center, half-width)");
      if (!(bounds[1].lo >= kPatchBlend))
        fail("cosine-patch half-width bound must be at least the blend width 0.05");
      break;
    case ShapeFamily::spline:
      if (bounds.size() < 4) fail("spline needs at least 4 coefficients");
      break;
  }
}

inline bool in_bounds(const ShapeParams& r) {
  if (r.values.size() != r.bounds.size()) return false;
  for (std::size_t k = 0; k < r.values.size(); ++k)
    if (!r.bounds[k].contains(r.values[k])) return false;
  return true;
}

inline void validate(const ShapeParams& r) {
  if (r.values.size() != r.bounds.size())
    throw Error(ErrorCategory::invalid_shape, "shape values and bounds differ in length");
  validate_shape_box(r.family, r.bounds);
  if (!in_bounds(r))
    throw Error(ErrorCategory::invalid_shape, "shape parameters lie outside their bounds");
}

namespace detail {

/// All m clamped cubic B-spline basis values at x in [0, 1].
inline std::vector<double> bspline_basis(int m, double x) {
  constexpr int degree = 3;
  const int segments = m - degree;
  std::vector<double> knots(m + degree + 1);
  for (int i = 0; i < static_cast<int>(knots.size()); ++i) {
    const int interior = std::clamp(i - degree, 0, segments);
    knots[i] = static_cast<double>(interior) / segments;
  }
  // Span index with knots[span] <= x < knots[span + 1]; x = 1 uses the last span.
  int span = degree + std::min(segments - 1, static_cast<int>(std::floor(x * segments)));
  span = std::max(span, degree);

  std::vector<double> local(degree + 1, 0.0);
  std::vector<double> left(degree + 1), right(degree + 1);
  local[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = local[r] / (right[r + 1] + left[j - r]);
      local[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    local[j] = saved;
  }
  std::vector<double> basis(m, 0.0);
  for (int j = 0; j <= degree; ++j) basis[span - degree + j] = local[j];
  return basis;
}

inline double patch_profile(double d, double half_width) {
  const double inner = half_width - kPatchBlend;
  if (d <= inner) return 1.0;
  if (d >= half_width + kPatchBlend) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (d - inner) / (2.0 * kPatchBlend)));
}

/// d(profile)/dd
inline double patch_slope(double d, double half_width) {
  const double inner = half_width - kPatchBlend;
  if (d <= inner || d >= half_width + kPatchBlend) return 0.0;
  return -std::numbers::pi / (4.0 * kPatchBlend) *
         std::sin(std::numbers::pi * (d - inner) / (2.0 * kPatchBlend));
}

}  // namespace detail

inline Vector eval_shape_unchecked(const ShapeParams& r, const Vector& grid) {
  Vector b(grid.size());
  switch (r.family) {
    case ShapeFamily::gaussian_bump: {
      const double c = r.values[0], s = r.values[1];
      for (Eigen::Index j = 0; j < grid.size(); ++j) {
        const double d = grid[j] - c;
        b[j] = std::exp(-d * d / (2.0 * s * s));
      }
      break;
    }
    case ShapeFamily::cosine_patch: {
      const double c = r.values[0], l = r.values[1];
      for (Eigen::Index j = 0; j < grid.size(); ++j) b[j] = detail::patch_profile(std::abs(grid[j] - c), l);
      break;
    }
    case ShapeFamily::spline: {
      const int m = static_cast<int>(r.values.size());
      for (Eigen::Index j = 0; j < grid.size(); ++j) {
        const auto psi = detail::bspline_basis(m, grid[j]);
        double sum = 0.0;
        for (int k = 0; k < m; ++k) sum += r.values[k] * psi[k];
        b[j] = sum;
      }
      break;
    }
  }
  return b;
}

/// Samples of b(x, r) on the given points. Rejects r outside its box.
inline Vector eval_shape(const ShapeParams& r, const Vector& grid) {
  validate(r);
  return eval_shape_unchecked(r, grid);
}

/// Samples of the partial derivative db/dr_k.
inline Vector eval_shape_partial(const ShapeParams& r, const Vector& grid, std::size_t k) {
  Vector db(grid.size());
  switch (r.family) {
    case ShapeFamily::gaussian_bump: {
      const double c = r.values[0], s = r.values[1];
      for (Eigen::Index j = 0; j < grid.size(); ++j) {
        const double d = grid[j] - c;
        const double b = std::exp(-d * d / (2.0 * s * s));
        db[j] = k == 0 ? b * d / (s * s) : b * d * d / (s * s * s);
      }
      break;
    }
    case ShapeFamily::cosine_patch: {
      const double c = r.values[0], l = r.values[1];
      for (Eigen::Index j = 0; j < grid.size(); ++j) {
        const double x = grid[j] - c;
        const double slope = detail::patch_slope(std::abs(x), l);
        // profile depends on |x - c| - l
        db[j] = k == 0 ? -slope * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0)) : -slope;
      }
      break;
    }
    case ShapeFamily::spline: {
      const int m = static_cast<int>(r.values.size());
      for (Eigen::Index j = 0; j < grid.size(); ++j) db[j] = detail::bspline_basis(m, grid[j])[k];
      break;
    }
  }
  return db;
}

/// Modal load b_n = 2 int b(x, r) sin(n pi x) dx on the quadrature grid.
inline Vector shape_modal_load(const DiscreteModel& model, const ShapeParams& r) {
  return model.project(eval_shape(r, model.quad_grid()));
}

/// Directional derivative of shape_modal_load at r along dir.
inline Vector shape_modal_jacobian(const DiscreteModel& model, const ShapeParams& r,
                                   const std::vector<double>& dir) {
  if (dir.size() != r.values.size())
    throw Error(ErrorCategory::size_mismatch, "shape direction length mismatch");
  Vector db = Vector::Zero(model.quad_grid().size());
  for (std::size_t k = 0; k < dir.size(); ++k)
    if (dir[k] != 0.0) db += dir[k] * eval_shape_partial(r, model.quad_grid(), k);
  return model.project(db);
}

/// Columns are the modal loads of each partial derivative db/dr_k.
inline Matrix shape_modal_jacobian_matrix(const DiscreteModel& model, const ShapeParams& r) {
  Matrix jac(model.n_modes(), static_cast<Eigen::Index>(r.size()));
  for (std::size_t k = 0; k < r.size(); ++k)
    jac.col(static_cast<Eigen::Index>(k)) = model.project(eval_shape_partial(r, model.quad_grid(), k));
  return jac;
}

}  // namespace railopt
