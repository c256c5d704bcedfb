#pragma once

// Implicit trapezoidal time stepping for the modal system
//
//   q' = v
//   v' = -(lambda + 1) q - (lambda C_d + mu) v + N(q) + b u
//
// with Newton on each step. The tangent-linear solve differentiates the
// discrete step exactly, so it is the derivative of forward_solve itself.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "railopt/error.hpp"
#include "railopt/model.hpp"
#include "railopt/shape.hpp"

namespace railopt {

inline constexpr double kNewtonTolerance = 1e-12;
inline constexpr int kNewtonMaxIterations = 20;

/// Stacked 2N vectors, one per time node.
using History = std::vector<Vector>;

struct TimeGrid {
  int n_steps = 0;
  double dt = 0.0;
  double tau = 0.0;

  double time(int k) const { return k == n_steps ? tau : k * dt; }
  int n_nodes() const { return n_steps + 1; }
};

/// K = round(tau / dt) steps of width tau / K.
inline TimeGrid make_time_grid(const ModelConfig& config) {
  const int k = std::max(1, static_cast<int>(std::lround(config.tau / config.dt)));
  return {k, config.tau / k, config.tau};
}

inline TimeGrid make_time_grid(const DiscreteModel& model) { return make_time_grid(model.config()); }

/// Trapezoid quadrature weights on the time nodes.
inline Vector trapezoid_weights(const TimeGrid& grid) {
  Vector w = Vector::Constant(grid.n_nodes(), grid.dt);
  w[0] *= 0.5;
  w[grid.n_steps] *= 0.5;
  return w;
}

/// Piecewise-linear control given by its nodal values.
struct ControlSignal {
  Vector samples;
  double norm_bound = 10.0;
};

inline double control_l2_norm(const Vector& u, const TimeGrid& grid) {
  return std::sqrt(trapezoid_weights(grid).dot(u.cwiseAbs2()));
}

struct Trajectory {
  std::vector<StateVector> states;
  ControlSignal control;
  ShapeParams shape;
  Vector modal_load;
  std::vector<int> newton_iterations;
};

namespace detail {

/// Right-hand side G(x, u) on the stacked state.
inline Vector rhs(const DiscreteModel& model, const Vector& y, double u, const Vector& b) {
  const int n = model.n_modes();
  const auto& c = model.config();
  const Vector& lambda = model.stiffness();
  Vector g(2 * n);
  const auto q = y.head(n);
  const auto v = y.tail(n);
  g.head(n) = v;
  g.tail(n) = -(lambda.array() + 1.0).matrix().cwiseProduct(q) -
              (lambda.array() * c.cd + c.mu).matrix().cwiseProduct(v) + nonlinear_term(model, q) + u * b;
  return g;
}

/// dG/dx at the stacked state.
inline Matrix rhs_jacobian(const DiscreteModel& model, const Vector& y) {
  const int n = model.n_modes();
  const auto& c = model.config();
  const Vector& lambda = model.stiffness();
  Matrix jac = Matrix::Zero(2 * n, 2 * n);
  jac.topRightCorner(n, n).setIdentity();
  jac.bottomLeftCorner(n, n) = nonlinear_jacobian(model, y.head(n));
  jac.bottomLeftCorner(n, n).diagonal() -= (lambda.array() + 1.0).matrix();
  jac.bottomRightCorner(n, n).diagonal() = -(lambda.array() * c.cd + c.mu).matrix();
  return jac;
}

/// I - (dt/2) J and I + (dt/2) J at one node.
struct StepOperators {
  Eigen::PartialPivLU<Matrix> implicit_lu;
  Matrix explicit_part;
};

inline StepOperators step_operators(const DiscreteModel& model, const Vector& y, double dt) {
  const Matrix jac = rhs_jacobian(model, y);
  const auto dim = jac.rows();
  const Matrix eye = Matrix::Identity(dim, dim);
  return {Eigen::PartialPivLU<Matrix>(eye - 0.5 * dt * jac), eye + 0.5 * dt * jac};
}

inline void check_solvable(const Eigen::PartialPivLU<Matrix>& lu, int step, const char* what) {
  const double rc = lu.rcond();
  if (!(rc > 1e-14))
    throw SolverError(ErrorCategory::singular_step, step,
                      std::string(what) + ": singular linearized step at index " + std::to_string(step));
}

}  // namespace detail

struct StepResult {
  StateVector state;
  int iterations = 0;
};

/// One trapezoidal step from x_k to x_{k+1}.
inline StepResult step(const DiscreteModel& model, const StateVector& xk, double uk, double uk1,
                       const Vector& b, double dt, int step_index = 0) {
  const Vector yk = xk.stacked();
  const Vector fixed = yk + 0.5 * dt * detail::rhs(model, yk, uk, b);
  const double scale = std::max({1.0, yk.lpNorm<Eigen::Infinity>(), fixed.lpNorm<Eigen::Infinity>()});
  const double alpha = model.config().alpha;

  Vector y = yk;
  Eigen::PartialPivLU<Matrix> lu;
  bool have_lu = false;
  for (int it = 0; it <= kNewtonMaxIterations; ++it) {
    const Vector residual = y - 0.5 * dt * detail::rhs(model, y, uk1, b) - fixed;
    const double norm = residual.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(norm)) break;
    if (norm <= kNewtonTolerance * scale) {
      // one chord correction with the last factorization takes the residual
      // down to roundoff, so the step map is smooth in its inputs
      if (have_lu && norm > 0.0) y -= lu.solve(residual);
      return {StateVector::from_stacked(y), it};
    }
    if (it == kNewtonMaxIterations) break;
    // the Jacobian is constant when the cubic term is off
    if (!have_lu || alpha != 0.0) {
      const auto dim = y.size();
      lu.compute(Matrix::Identity(dim, dim) - 0.5 * dt * detail::rhs_jacobian(model, y));
      have_lu = true;
    }
    y -= lu.solve(residual);
  }
  throw SolverError(ErrorCategory::newton_divergence, step_index,
                    "Newton iteration did not converge at step " + std::to_string(step_index));
}

inline Trajectory forward_solve(const DiscreteModel& model, const ControlSignal& u, const ShapeParams& r,
                                const StateVector& x0) {
  const TimeGrid grid = make_time_grid(model);
  if (u.samples.size() != grid.n_nodes())
    throw Error(ErrorCategory::size_mismatch,
                "control needs " + std::to_string(grid.n_nodes()) + " samples");
  if (x0.q.size() != model.n_modes() || x0.v.size() != model.n_modes())
    throw Error(ErrorCategory::size_mismatch, "initial state does not match n_modes");

  Trajectory traj;
  traj.control = u;
  traj.shape = r;
  traj.modal_load = shape_modal_load(model, r);
  traj.states.reserve(grid.n_nodes());
  traj.newton_iterations.reserve(grid.n_steps);
  traj.states.push_back(x0);
  for (int k = 0; k < grid.n_steps; ++k) {
    auto next = step(model, traj.states.back(), u.samples[k], u.samples[k + 1], traj.modal_load, grid.dt, k);
    traj.states.push_back(std::move(next.state));
    traj.newton_iterations.push_back(next.iterations);
  }
  return traj;
}

/// J = 1/2 int ||x||^2 + gamma u^2 dt with the trapezoid rule.
inline double evaluate_cost(const DiscreteModel& model, const Trajectory& traj) {
  const TimeGrid grid = make_time_grid(model);
  const Vector w = trapezoid_weights(grid);
  const double gamma = model.config().gamma;
  double j = 0.0;
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double u = traj.control.samples[k];
    j += w[k] * (energy_norm_sq(model, traj.states[k]) + gamma * u * u);
  }
  return 0.5 * j;
}

/// Solves the linearized discrete dynamics h' = (A + F'_x(t)) h + g with h(0) = 0.
inline History tangent_linear_solve(const DiscreteModel& model, const Trajectory& traj, const History& forcing) {
  const TimeGrid grid = make_time_grid(model);
  const int dim = 2 * model.n_modes();
  if (static_cast<int>(forcing.size()) != grid.n_nodes())
    throw Error(ErrorCategory::size_mismatch, "tangent forcing must cover every time node");

  History h(grid.n_nodes(), Vector::Zero(dim));
  auto ops = detail::step_operators(model, traj.states[0].stacked(), grid.dt);
  for (int k = 0; k < grid.n_steps; ++k) {
    auto next = detail::step_operators(model, traj.states[k + 1].stacked(), grid.dt);
    detail::check_solvable(next.implicit_lu, k, "tangent");
    const Vector rhs = ops.explicit_part * h[k] + 0.5 * grid.dt * (forcing[k] + forcing[k + 1]);
    h[k + 1] = next.implicit_lu.solve(rhs);
    ops = std::move(next);
  }
  return h;
}

/// Forcing (0, b u_k) for a modal load b and control samples u.
inline History control_forcing(const Vector& b, const Vector& u) {
  const auto n = b.size();
  History g(u.size(), Vector::Zero(2 * n));
  for (Eigen::Index k = 0; k < u.size(); ++k) g[k].tail(n) = u[k] * b;
  return g;
}

}  // namespace railopt
