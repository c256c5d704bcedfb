#pragma once

// Modal Galerkin discretization of the hinged railway-track beam
//
//   w_tt + (w_xx + C_d w_xxt)_xx + mu w_t + w + alpha w^3 = b(x, r) u(t)
//
// on [0, 1] with w = 0 and w_xx + C_d w_xxt = 0 at both ends. The sine modes
// sin(n pi x) diagonalize the biharmonic operator under these conditions, so
// the linear part is diagonal per mode and only the cubic foundation term
// couples modes. That term is evaluated pseudo-spectrally on the interior grid
// x_j = j / M, which is alias-free while the cube stays below mode M.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "railopt/error.hpp"

namespace railopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct ModelConfig {
  double alpha = 1.0;  // cubic foundation coefficient
  double mu = 0.1;     // viscous foundation damping
  double cd = 0.001;   // Kelvin-Voigt damping
  double gamma = 0.1;  // control weight in the cost
  double tau = 1.0;    // horizon
  int n_modes = 16;
  int n_quad = 0;  // 0 selects 4 * n_modes
  double dt = 1e-3;

  int quad_points() const { return n_quad > 0 ? n_quad : 4 * n_modes; }
};

inline void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(c.gamma > 0.0)) fail("gamma must be positive");
  if (!(c.tau > 0.0)) fail("tau must be positive");
  if (!(c.dt > 0.0)) fail("dt must be positive");
  if (!(c.dt < c.tau)) fail("dt must be smaller than tau");
  if (!(c.alpha >= 0.0)) fail("alpha must be non-negative");
  if (!(c.mu >= 0.0)) fail("mu must be non-negative");
  if (!(c.cd >= 0.0)) fail("cd must be non-negative");
  if (c.n_modes < 1) fail("n_modes must be at least 1");
  if (c.n_quad < 0) fail("n_quad must be non-negative");
  if (c.quad_points() < 3 * c.n_modes + 1)
    fail("n_quad must be at least 3 * n_modes + 1 to resolve the cubic term");
}

/// Modal coefficients of displacement and velocity.
struct StateVector {
  Vector q;
  Vector v;

  static StateVector zero(int n) { return {Vector::Zero(n), Vector::Zero(n)}; }

  int size() const { return static_cast<int>(q.size()); }

  Vector stacked() const {
    Vector y(q.size() + v.size());
    y << q, v;
    return y;
  }

  static StateVector from_stacked(const Vector& y) {
    const auto n = y.size() / 2;
    return {y.head(n), y.tail(n)};
  }
};

/// Grid samples of displacement and velocity on the interior quadrature grid.
struct PhysicalState {
  Vector w;
  Vector v;
};

class DiscreteModel {
 public:
  explicit DiscreteModel(const ModelConfig& config) : config_(config) {
    validate(config_);
    const int n = config_.n_modes;
    const int m = config_.quad_points();
    stiffness_.resize(n);
    for (int k = 0; k < n; ++k) stiffness_[k] = std::pow((k + 1) * std::numbers::pi, 4);
    quad_grid_.resize(m - 1);
    for (int j = 0; j < m - 1; ++j) quad_grid_[j] = static_cast<double>(j + 1) / m;
    sine_table_.resize(m - 1, n);
    for (int j = 0; j < m - 1; ++j)
      for (int k = 0; k < n; ++k)
        sine_table_(j, k) = std::sin((k + 1) * std::numbers::pi * quad_grid_[j]);
    energy_weights_.resize(2 * n);
    energy_weights_.head(n) = (stiffness_.array() + 1.0) / 2.0;
    energy_weights_.tail(n).setConstant(0.5);
  }

  const ModelConfig& config() const { return config_; }
  int n_modes() const { return config_.n_modes; }
  int n_quad() const { return config_.quad_points(); }

  /// (n pi)^4 for n = 1..N.
  const Vector& stiffness() const { return stiffness_; }
  /// Interior points j / M, j = 1..M-1.
  const Vector& quad_grid() const { return quad_grid_; }
  /// sin(n pi x_j), rows indexed by grid point.
  const Matrix& sine_table() const { return sine_table_; }
  /// Diagonal of the energy norm: ((n pi)^4 + 1) / 2 for q, 1/2 for v.
  const Vector& energy_weights() const { return energy_weights_; }

  /// Sine coefficients 2 * int f sin(n pi x) dx by the trapezoid rule.
  Vector project(const Vector& samples) const {
    if (samples.size() != quad_grid_.size())
      throw Error(ErrorCategory::size_mismatch, "sample count does not match quadrature grid");
    return (2.0 / n_quad()) * (sine_table_.transpose() * samples);
  }

  Vector synthesize(const Vector& modes) const { return sine_table_ * modes; }

 private:
  ModelConfig config_;
  Vector stiffness_;
  Vector quad_grid_;
  Matrix sine_table_;
  Vector energy_weights_;
};

inline DiscreteModel build_model(const ModelConfig& config) { return DiscreteModel(config); }

/// Modal force of -alpha w^3.
inline Vector nonlinear_term(const DiscreteModel& model, const Vector& q) {
  const double alpha = model.config().alpha;
  if (alpha == 0.0) return Vector::Zero(model.n_modes());
  const Vector w = model.synthesize(q);
  return -alpha * model.project(w.array().cube().matrix());
}

/// Action of the linearized cubic term, -3 alpha w^2 dw, projected onto the modes.
inline Vector nonlinear_jacobian_apply(const DiscreteModel& model, const Vector& q, const Vector& dq) {
  const double alpha = model.config().alpha;
  if (alpha == 0.0) return Vector::Zero(model.n_modes());
  const Vector w = model.synthesize(q);
  const Vector dw = model.synthesize(dq);
  return -3.0 * alpha * model.project((w.array().square() * dw.array()).matrix());
}

/// Dense N x N matrix of nonlinear_jacobian_apply; symmetric.
inline Matrix nonlinear_jacobian(const DiscreteModel& model, const Vector& q) {
  const int n = model.n_modes();
  const double alpha = model.config().alpha;
  if (alpha == 0.0) return Matrix::Zero(n, n);
  const Matrix& s = model.sine_table();
  const Vector w2 = model.synthesize(q).array().square();
  const double scale = -3.0 * alpha * 2.0 / model.n_quad();
  return scale * (s.transpose() * w2.asDiagonal() * s);
}

inline double energy_norm_sq(const DiscreteModel& model, const StateVector& x) {
  const int n = model.n_modes();
  const Vector& e = model.energy_weights();
  return e.head(n).dot(x.q.cwiseAbs2()) + e.tail(n).dot(x.v.cwiseAbs2());
}

inline StateVector state_from_physical(const DiscreteModel& model, const Vector& w0, const Vector& v0) {
  const auto m = model.quad_grid().size();
  if (w0.size() != m || v0.size() != m)
    throw Error(ErrorCategory::size_mismatch,
                "initial condition must have " + std::to_string(m) + " grid samples");
  return {model.project(w0), model.project(v0)};
}

inline PhysicalState state_to_physical(const DiscreteModel& model, const StateVector& x) {
  return {model.synthesize(x.q), model.synthesize(x.v)};
}

}  // namespace railopt
