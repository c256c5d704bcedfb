#pragma once

// Discrete adjoint of the trapezoidal forward scheme.
//
// Writing the linearized step as A_{k+1} h_{k+1} = B_k h_k + dt/2 (g_k + g_{k+1})
// with A = I - dt/2 J and B = I + dt/2 J, the backward sweep is
//
//   p_K = 0
//   A_k^T m_k = c_k + p_k          (step multiplier m_k, k = K..1)
//   p_{k-1} = B_{k-1}^T m_k        (costate at the previous node)
//
// where c_k is the derivative of the cost with respect to x_k. The pairing of
// the adjoint with a forcing history g is sum_k dt/2 (m_k + m_{k+1}) . g_k,
// which equals sum_k c_k . h_k for the tangent response h to g.

#include <cmath>
#include <vector>

#include "railopt/admissible.hpp"
#include "railopt/forward.hpp"
#include "railopt/model.hpp"
#include "railopt/shape.hpp"

namespace railopt {

struct AdjointTrajectory {
  History costates;     // p_k, k = 0..K, p_K = 0
  History multipliers;  // m_k, k = 0..K, m_0 = 0
};

struct Gradient {
  Vector grad_u;  // dJ/du_k
  Vector grad_r;  // dJ/dr_k
};

struct KKTResidual {
  double control_stationarity = 0.0;
  double shape_stationarity = 0.0;
  double collinearity = 0.0;
};

/// c_k = dJ/dx_k for the state part of the cost.
inline History cost_state_gradient(const DiscreteModel& model, const Trajectory& traj) {
  const Vector w = trapezoid_weights(make_time_grid(model));
  const Vector& e = model.energy_weights();
  History c(traj.states.size());
  for (std::size_t k = 0; k < traj.states.size(); ++k)
    c[k] = w[static_cast<Eigen::Index>(k)] * e.cwiseProduct(traj.states[k].stacked());
  return c;
}

/// Backward sweep for an arbitrary cost-forcing history.
inline AdjointTrajectory adjoint_sweep(const DiscreteModel& model, const Trajectory& traj,
                                       const History& cost_forcing) {
  const TimeGrid grid = make_time_grid(model);
  const int dim = 2 * model.n_modes();
  if (static_cast<int>(cost_forcing.size()) != grid.n_nodes())
    throw Error(ErrorCategory::size_mismatch, "adjoint forcing must cover every time node");

  AdjointTrajectory adj;
  adj.costates.assign(grid.n_nodes(), Vector::Zero(dim));
  adj.multipliers.assign(grid.n_nodes(), Vector::Zero(dim));
  const Matrix eye = Matrix::Identity(dim, dim);
  Matrix jac = detail::rhs_jacobian(model, traj.states[grid.n_steps].stacked());
  for (int k = grid.n_steps; k >= 1; --k) {
    const Eigen::PartialPivLU<Matrix> lu(eye - 0.5 * grid.dt * jac);
    detail::check_solvable(lu, k - 1, "adjoint");
    // A^T x = y solved through the LU of A
    adj.multipliers[k] = lu.transpose().solve(cost_forcing[k] + adj.costates[k]);
    jac = detail::rhs_jacobian(model, traj.states[k - 1].stacked());
    adj.costates[k - 1] = adj.multipliers[k] + 0.5 * grid.dt * (jac.transpose() * adj.multipliers[k]);
  }
  return adj;
}

inline AdjointTrajectory adjoint_solve(const DiscreteModel& model, const Trajectory& traj) {
  return adjoint_sweep(model, traj, cost_state_gradient(model, traj));
}

/// s_k = dt/2 (m_k + m_{k+1}): sensitivity of J to a forcing applied at node k.
inline History forcing_sensitivity(const DiscreteModel& model, const AdjointTrajectory& adj) {
  const TimeGrid grid = make_time_grid(model);
  History s(grid.n_nodes());
  for (int k = 0; k < grid.n_nodes(); ++k) {
    Vector m = adj.multipliers[k];
    if (k + 1 < grid.n_nodes()) m += adj.multipliers[k + 1];
    s[k] = 0.5 * grid.dt * m;
  }
  return s;
}

/// sum_k s_k . g_k
inline double pair_forcing(const History& sensitivity, const History& forcing) {
  double sum = 0.0;
  for (std::size_t k = 0; k < forcing.size(); ++k) sum += sensitivity[k].dot(forcing[k]);
  return sum;
}

namespace detail {

/// Velocity part of the forcing sensitivity, one row per node.
inline Matrix velocity_sensitivity(const DiscreteModel& model, const AdjointTrajectory& adj) {
  const int n = model.n_modes();
  const History s = forcing_sensitivity(model, adj);
  Matrix out(static_cast<Eigen::Index>(s.size()), n);
  for (std::size_t k = 0; k < s.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = s[k].tail(n).transpose();
  return out;
}

}  // namespace detail

inline Vector gradient_control(const DiscreteModel& model, const Trajectory& traj, const AdjointTrajectory& adj) {
  const Vector w = trapezoid_weights(make_time_grid(model));
  const Matrix sv = detail::velocity_sensitivity(model, adj);
  return sv * traj.modal_load + model.config().gamma * w.cwiseProduct(traj.control.samples);
}

inline Vector gradient_shape(const DiscreteModel& model, const Trajectory& /*traj*/,
                             const AdjointTrajectory& adj, const ShapeParams& r, const ControlSignal& u) {
  const Matrix sv = detail::velocity_sensitivity(model, adj);
  const Matrix jac = shape_modal_jacobian_matrix(model, r);
  // grad_r[j] = sum_k u_k (s_k^v . db/dr_j)
  return jac.transpose() * (sv.transpose() * u.samples);
}

inline Gradient compute_gradient(const DiscreteModel& model, const Trajectory& traj, const AdjointTrajectory& adj) {
  return {gradient_control(model, traj, adj), gradient_shape(model, traj, adj, traj.shape, traj.control)};
}

/// Riesz representative of grad_u in the trapezoid L2 inner product.
inline Vector l2_control_gradient(const DiscreteModel& model, const Vector& grad_u) {
  return grad_u.cwiseQuotient(trapezoid_weights(make_time_grid(model)));
}

/// B*(r) applied to the node costate: (s_k^v . b) / w_k. At an interior
/// stationary point gamma u + this series vanishes.
inline Vector costate_control_series(const DiscreteModel& model, const Trajectory& traj,
                                     const AdjointTrajectory& adj) {
  const Vector w = trapezoid_weights(make_time_grid(model));
  return (detail::velocity_sensitivity(model, adj) * traj.modal_load).cwiseQuotient(w);
}

inline KKTResidual kkt_residuals(const DiscreteModel& model, const ControlSignal& u, const ShapeParams& r,
                                 const Trajectory& traj, const AdjointTrajectory& adj, const Gradient& grad,
                                 const AdmissibleSets& sets) {
  const TimeGrid grid = make_time_grid(model);
  KKTResidual out;

  const Vector g_u = l2_control_gradient(model, grad.grad_u);
  const Vector moved = project_control(u.samples - g_u, sets.control_ball_radius, grid) - u.samples;
  out.control_stationarity = control_l2_norm(moved, grid);

  double shape_sq = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double target = sets.shape_box[k].clamp(r.values[k] - grad.grad_r[static_cast<Eigen::Index>(k)]);
    shape_sq += (target - r.values[k]) * (target - r.values[k]);
  }
  out.shape_stationarity = std::sqrt(shape_sq);

  const Vector series = costate_control_series(model, traj, adj);
  const Vector w = trapezoid_weights(grid);
  const double nu = control_l2_norm(u.samples, grid);
  const double ns = control_l2_norm(series, grid);
  if (nu > 0.0 && ns > 0.0) {
    out.collinearity = std::clamp(w.dot(u.samples.cwiseProduct(series)) / (nu * ns), -1.0, 1.0);
  }
  return out;
}

}  // namespace railopt
