#pragma once

// Projected-gradient minimization of J over the control ball and shape box
// with Armijo backtracking. The control gradient is taken in the trapezoid L2
// metric, which is the metric in which the radial ball projection is exact.

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "railopt/adjoint.hpp"
#include "railopt/admissible.hpp"
#include "railopt/forward.hpp"
#include "railopt/model.hpp"
#include "railopt/shape.hpp"

namespace railopt {

enum class OptimMode { joint, alternating };
enum class OptimStatus { converged, max_iters, solver_failure };

inline constexpr double kMinStep = 1e-14;

inline std::string_view to_string(OptimMode m) { return m == OptimMode::joint ? "joint" : "alternating"; }

inline std::string_view to_string(OptimStatus s) {
  switch (s) {
    case OptimStatus::converged: return "converged";
    case OptimStatus::max_iters: return "max-iters";
    case OptimStatus::solver_failure: return "solver-failure";
  }
  return "unknown";
}

struct OptimConfig {
  int max_iters = 500;
  double grad_tol = 1e-6;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double initial_step = 1.0;
  OptimMode mode = OptimMode::alternating;
};

inline void validate(const OptimConfig& c) {
  if (c.max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (!(c.grad_tol > 0.0)) throw ConfigError("grad_tol must be positive");
  if (!(c.armijo_c > 0.0 && c.armijo_c < 1.0)) throw ConfigError("armijo_c must lie in (0, 1)");
  if (!(c.backtrack_factor > 0.0 && c.backtrack_factor < 1.0))
    throw ConfigError("backtrack_factor must lie in (0, 1)");
  if (!(c.initial_step > 0.0)) throw ConfigError("initial_step must be positive");
}

struct IterateRecord {
  int iter = 0;
  double cost = 0.0;
  double control_stationarity = 0.0;
  double shape_stationarity = 0.0;
  double step = 0.0;
};

struct OptimResult {
  ControlSignal u_opt;
  ShapeParams r_opt;
  double J_initial = 0.0;
  double J_opt = 0.0;
  KKTResidual kkt;
  std::vector<IterateRecord> iterate_log;
  OptimStatus status = OptimStatus::max_iters;
  int iterations = 0;
  std::string message;
  Trajectory trajectory;
};

/// Everything known at one (u, r).
struct Evaluation {
  Trajectory traj;
  double cost = 0.0;
  AdjointTrajectory adj;
  Gradient grad;
  KKTResidual kkt;
};

inline void complete_evaluation(const DiscreteModel& model, const AdmissibleSets& sets, Evaluation& e) {
  e.adj = adjoint_solve(model, e.traj);
  e.grad = compute_gradient(model, e.traj, e.adj);
  e.kkt = kkt_residuals(model, e.traj.control, e.traj.shape, e.traj, e.adj, e.grad, sets);
}

inline Evaluation evaluate_point(const DiscreteModel& model, const AdmissibleSets& sets, const StateVector& x0,
                                 const ControlSignal& u, const ShapeParams& r) {
  Evaluation e;
  e.traj = forward_solve(model, u, r, x0);
  e.cost = evaluate_cost(model, e.traj);
  complete_evaluation(model, sets, e);
  return e;
}

namespace detail {

struct AcceptedStep {
  Evaluation eval;
  double step = 0.0;
};

/// Why a line search produced no step. `diverged` means some trial point broke
/// the forward solver; otherwise J has no representable decrease left.
struct LineSearchFailure {
  bool diverged = false;
};

struct LineSearchOutcome {
  std::optional<AcceptedStep> accepted;
  LineSearchFailure failure;
};

/// One projected Armijo step on the selected blocks; empty when no step above
/// kMinStep gives sufficient decrease.
inline LineSearchOutcome projected_armijo(const DiscreteModel& model, const AdmissibleSets& sets,
                                                    const OptimConfig& cfg, const StateVector& x0,
                                                    const Evaluation& cur, bool move_u, bool move_r,
                                                    double first_step) {
  const TimeGrid grid = make_time_grid(model);
  const Vector& u = cur.traj.control.samples;
  const std::vector<double>& r = cur.traj.shape.values;
  const Vector g_u = l2_control_gradient(model, cur.grad.grad_u);

  LineSearchOutcome out;
  for (double t = first_step; t >= kMinStep; t *= cfg.backtrack_factor) {
    ControlSignal u_t = cur.traj.control;
    ShapeParams r_t = cur.traj.shape;
    double slope = 0.0;
    if (move_u) {
      u_t.samples = project_control(u - t * g_u, sets.control_ball_radius, grid);
      slope += cur.grad.grad_u.dot(u_t.samples - u);
    }
    if (move_r) {
      std::vector<double> trial(r.size());
      for (std::size_t k = 0; k < r.size(); ++k) trial[k] = r[k] - t * cur.grad.grad_r[static_cast<Eigen::Index>(k)];
      r_t.values = project_shape(trial, sets.shape_box);
      for (std::size_t k = 0; k < r.size(); ++k)
        slope += cur.grad.grad_r[static_cast<Eigen::Index>(k)] * (r_t.values[k] - r[k]);
    }
    if (!(slope < 0.0)) return out;

    Evaluation trial;
    try {
      trial.traj = forward_solve(model, u_t, r_t, x0);
    } catch (const SolverError&) {
      out.failure.diverged = true;
      continue;
    }
    out.failure.diverged = false;
    trial.cost = evaluate_cost(model, trial.traj);
    if (trial.cost <= cur.cost + cfg.armijo_c * slope) {
      complete_evaluation(model, sets, trial);
      out.accepted = AcceptedStep{std::move(trial), t};
      return out;
    }
  }
  return out;
}

inline void report_failure(OptimResult& result, const LineSearchFailure& f, const std::string& where, int iter) {
  if (f.diverged) {
    result.status = OptimStatus::solver_failure;
    result.message = "forward solve diverged at every trial step of the " + where + " at iteration " +
                     std::to_string(iter);
  } else {
    result.status = OptimStatus::max_iters;
    result.message = "no representable decrease of J in the " + where + " at iteration " + std::to_string(iter) +
                     "; stationary to working precision";
  }
}

/// Backtracking restarts one expansion above the last accepted step.
inline double next_trial_step(const OptimConfig& cfg, double accepted) {
  return std::min(cfg.initial_step, accepted / cfg.backtrack_factor);
}

inline IterateRecord record(int iter, const Evaluation& e, double step) {
  return {iter, e.cost, e.kkt.control_stationarity, e.kkt.shape_stationarity, step};
}

/// Projected gradient on u alone until control stationarity drops below tol.
/// Returns the line-search failure that stopped it, if any.
inline std::optional<LineSearchFailure> relax_control_in_place(const DiscreteModel& model, const AdmissibleSets& sets,
                                                               const OptimConfig& cfg, const StateVector& x0,
                                                               Evaluation& cur, int& iterations) {
  iterations = 0;
  double first = cfg.initial_step;
  while (cur.kkt.control_stationarity >= cfg.grad_tol && iterations < cfg.max_iters) {
    auto ls = projected_armijo(model, sets, cfg, x0, cur, true, false, first);
    if (!ls.accepted) return ls.failure;
    first = next_trial_step(cfg, ls.accepted->step);
    cur = std::move(ls.accepted->eval);
    ++iterations;
  }
  return std::nullopt;
}

inline OptimResult finish(Evaluation&& cur, OptimResult&& result) {
  result.u_opt = cur.traj.control;
  result.r_opt = cur.traj.shape;
  result.J_opt = cur.cost;
  result.kkt = cur.kkt;
  result.trajectory = std::move(cur.traj);
  return std::move(result);
}

inline ShapeParams admissible_shape(const ShapeParams& r, const AdmissibleSets& sets) {
  if (sets.shape_box.size() != r.size())
    throw ConfigError("shape box does not match the number of shape parameters");
  ShapeParams out = r;
  out.bounds = sets.shape_box;
  out.values = project_shape(r.values, sets.shape_box);
  return out;
}

}  // namespace detail

/// Minimizes J over u with r held fixed.
inline OptimResult relax_control(const DiscreteModel& model, const AdmissibleSets& sets, const OptimConfig& cfg,
                                 const StateVector& x0, const ControlSignal& u_init, const ShapeParams& r) {
  validate(sets);
  validate(cfg);
  const TimeGrid grid = make_time_grid(model);
  ControlSignal u = u_init;
  u.samples = project_control(u_init.samples, sets.control_ball_radius, grid);
  u.norm_bound = sets.control_ball_radius;

  Evaluation cur = evaluate_point(model, sets, x0, u, detail::admissible_shape(r, sets));
  OptimResult result;
  result.J_initial = cur.cost;
  result.iterate_log.push_back(detail::record(0, cur, 0.0));
  int it = 0;
  double first = cfg.initial_step;
  for (; it < cfg.max_iters && cur.kkt.control_stationarity >= cfg.grad_tol; ++it) {
    auto ls = detail::projected_armijo(model, sets, cfg, x0, cur, true, false, first);
    if (!ls.accepted) {
      detail::report_failure(result, ls.failure, "control line search", it + 1);
      break;
    }
    first = detail::next_trial_step(cfg, ls.accepted->step);
    cur = std::move(ls.accepted->eval);
    result.iterate_log.push_back(detail::record(it + 1, cur, ls.accepted->step));
  }
  result.iterations = it;
  if (cur.kkt.control_stationarity < cfg.grad_tol) result.status = OptimStatus::converged;
  return detail::finish(std::move(cur), std::move(result));
}

inline OptimResult optimize(const DiscreteModel& model, const AdmissibleSets& sets, const OptimConfig& cfg,
                            const StateVector& x0, const ControlSignal& u_init, const ShapeParams& r_init) {
  validate(sets);
  validate(cfg);
  const TimeGrid grid = make_time_grid(model);
  ControlSignal u = u_init;
  u.samples = project_control(u_init.samples, sets.control_ball_radius, grid);
  u.norm_bound = sets.control_ball_radius;

  Evaluation cur = evaluate_point(model, sets, x0, u, detail::admissible_shape(r_init, sets));
  OptimResult result;
  result.J_initial = cur.cost;
  result.iterate_log.push_back(detail::record(0, cur, 0.0));

  auto converged = [&](const Evaluation& e) {
    return e.kkt.control_stationarity < cfg.grad_tol && e.kkt.shape_stationarity < cfg.grad_tol;
  };

  int it = 0;
  double first = cfg.initial_step;
  for (; it < cfg.max_iters && !converged(cur); ++it) {
    double step = 0.0;
    if (cfg.mode == OptimMode::joint) {
      auto ls = detail::projected_armijo(model, sets, cfg, x0, cur, true, true, first);
      if (!ls.accepted) {
        detail::report_failure(result, ls.failure, "joint line search", it + 1);
        break;
      }
      cur = std::move(ls.accepted->eval);
      step = ls.accepted->step;
      first = detail::next_trial_step(cfg, step);
    } else {
      int inner = 0;
      if (auto failure = detail::relax_control_in_place(model, sets, cfg, x0, cur, inner)) {
        detail::report_failure(result, *failure, "control relaxation", it + 1);
        break;
      }
      if (!converged(cur) && cur.kkt.shape_stationarity >= cfg.grad_tol) {
        auto ls = detail::projected_armijo(model, sets, cfg, x0, cur, false, true, first);
        if (!ls.accepted) {
          detail::report_failure(result, ls.failure, "shape line search", it + 1);
          break;
        }
        cur = std::move(ls.accepted->eval);
        step = ls.accepted->step;
        first = detail::next_trial_step(cfg, step);
      }
    }
    result.iterate_log.push_back(detail::record(it + 1, cur, step));
  }
  result.iterations = it;
  if (converged(cur)) result.status = OptimStatus::converged;
  return detail::finish(std::move(cur), std::move(result));
}

}  // namespace railopt
