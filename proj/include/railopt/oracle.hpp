#pragma once

// Independent checks on the solver stack. The finite-difference gradients use
// only forward_solve and evaluate_cost; the closed-form oscillator knows
// nothing about the discretization.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "railopt/adjoint.hpp"
#include "railopt/forward.hpp"
#include "railopt/model.hpp"
#include "railopt/optimizer.hpp"
#include "railopt/shape.hpp"

namespace railopt {

inline constexpr double kGradCheckThreshold = 1e-5;
inline constexpr int kGradCheckDirectionModes = 16;

/// Worker count for independent oracle evaluations: RAILOPT_THREADS if set,
/// otherwise the hardware concurrency.
inline int thread_budget() {
  if (const char* env = std::getenv("RAILOPT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Results must be written by index so the
/// outcome does not depend on scheduling.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double cost_at(const DiscreteModel& model, const ControlSignal& u, const ShapeParams& r,
                      const StateVector& x0) {
  return evaluate_cost(model, forward_solve(model, u, r, x0));
}

/// Central-difference gradient in every control node and shape parameter.
inline Gradient fd_gradient(const DiscreteModel& model, const ControlSignal& u, const ShapeParams& r,
                            const StateVector& x0, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("finite-difference eps must lie in [1e-7, 1e-3]");
  const auto n_u = static_cast<int>(u.samples.size());
  const auto n_r = static_cast<int>(r.size());
  Gradient g{Vector::Zero(n_u), Vector::Zero(n_r)};
  parallel_for(n_u + n_r, [&](int i) {
    if (i < n_u) {
      ControlSignal plus = u, minus = u;
      plus.samples[i] += eps;
      minus.samples[i] -= eps;
      g.grad_u[i] = (cost_at(model, plus, r, x0) - cost_at(model, minus, r, x0)) / (2.0 * eps);
    } else {
      const int k = i - n_u;
      ShapeParams plus = r, minus = r;
      plus.values[k] += eps;
      minus.values[k] -= eps;
      g.grad_r[k] = (cost_at(model, u, plus, x0) - cost_at(model, u, minus, x0)) / (2.0 * eps);
    }
  });
  return g;
}

struct GradCheckReport {
  std::vector<std::string> labels;
  std::vector<double> adjoint_values;
  std::vector<double> fd_values;
  std::vector<double> errors;
  double eps = 0.0;
  double floor = 0.0;
  double worst = 0.0;
  bool pass = false;
};

inline double relative_error(double a, double b, double floor = 0.0) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

/// Smallest derivative magnitude that central differences resolve to the
/// threshold; smaller components are compared against this value instead.
inline double fd_resolution_floor(double cost, double eps) {
  return 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(cost)) / eps / kGradCheckThreshold;
}

/// Directional comparison of adjoint gradients against central differences:
/// n_directions random band-limited control directions plus every shape coordinate.
inline GradCheckReport grad_check(const DiscreteModel& model, const ControlSignal& u, const ShapeParams& r,
                                  const StateVector& x0, int n_directions, double eps, std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("finite-difference eps must lie in [1e-7, 1e-3]");
  const Trajectory traj = forward_solve(model, u, r, x0);
  const AdjointTrajectory adj = adjoint_solve(model, traj);
  const Gradient grad = compute_gradient(model, traj, adj);

  // Band-limited directions: white noise over K nodes shrinks directional
  // derivatives by sqrt(K) and buries them under the roundoff of J.
  const TimeGrid grid = make_time_grid(model);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vector> directions(n_directions);
  for (auto& d : directions) {
    d = Vector::Zero(u.samples.size());
    for (int j = 0; j < kGradCheckDirectionModes; ++j) {
      const double a = normal(rng);
      for (Eigen::Index k = 0; k < d.size(); ++k)
        d[k] += a * std::cos(j * std::numbers::pi * grid.time(static_cast<int>(k)) / grid.tau);
    }
  }

  const int total = n_directions + static_cast<int>(r.size());
  GradCheckReport report;
  report.eps = eps;
  report.floor = fd_resolution_floor(evaluate_cost(model, traj), eps);
  report.labels.resize(total);
  report.adjoint_values.resize(total);
  report.fd_values.resize(total);
  report.errors.resize(total);
  parallel_for(total, [&](int i) {
    double fd = 0.0, exact = 0.0;
    if (i < n_directions) {
      ControlSignal plus = u, minus = u;
      plus.samples += eps * directions[i];
      minus.samples -= eps * directions[i];
      fd = (cost_at(model, plus, r, x0) - cost_at(model, minus, r, x0)) / (2.0 * eps);
      exact = grad.grad_u.dot(directions[i]);
      report.labels[i] = "u_dir_" + std::to_string(i);
    } else {
      const int k = i - n_directions;
      ShapeParams plus = r, minus = r;
      plus.values[k] += eps;
      minus.values[k] -= eps;
      fd = (cost_at(model, u, plus, x0) - cost_at(model, u, minus, x0)) / (2.0 * eps);
      exact = grad.grad_r[k];
      report.labels[i] = "r_" + std::to_string(k);
    }
    report.fd_values[i] = fd;
    report.adjoint_values[i] = exact;
    report.errors[i] = relative_error(exact, fd, report.floor);
  });
  for (double e : report.errors) report.worst = std::max(report.worst, e);
  report.pass = report.worst <= kGradCheckThreshold;
  return report;
}

/// Closed-form free response of one undamped-foundation mode,
/// q'' + d q' + w^2 q = 0 with w^2 = pi^4 + 1 and d = C_d pi^4 + mu.
class LinearOscillator {
 public:
  LinearOscillator(double omega_sq, double damping, double q0, double v0)
      : omega_sq_(omega_sq), damping_(damping), q0_(q0), v0_(v0) {}

  double omega_sq() const { return omega_sq_; }
  double damping() const { return damping_; }

  StateVector at(double t) const {
    const double sigma = 0.5 * damping_;
    const double disc = sigma * sigma - omega_sq_;
    double q = 0.0, v = 0.0;
    if (std::abs(disc) <= 1e-12 * omega_sq_) {
      const double e = std::exp(-sigma * t);
      const double slope = v0_ + sigma * q0_;
      q = e * (q0_ + slope * t);
      v = e * (v0_ - sigma * slope * t);
    } else if (disc < 0.0) {
      const double beta = std::sqrt(-disc);
      const double e = std::exp(-sigma * t);
      const double c = std::cos(beta * t), s = std::sin(beta * t);
      q = e * (q0_ * c + (v0_ + sigma * q0_) / beta * s);
      v = e * (v0_ * c - (sigma * v0_ + omega_sq_ * q0_) / beta * s);
    } else {
      const double kappa = std::sqrt(disc);
      const double r1 = -sigma + kappa, r2 = -sigma - kappa;
      const double a = (v0_ - r2 * q0_) / (r1 - r2);
      const double b = q0_ - a;
      q = a * std::exp(r1 * t) + b * std::exp(r2 * t);
      v = a * r1 * std::exp(r1 * t) + b * r2 * std::exp(r2 * t);
    }
    return {Vector::Constant(1, q), Vector::Constant(1, v)};
  }

 private:
  double omega_sq_;
  double damping_;
  double q0_;
  double v0_;
};

inline LinearOscillator analytic_linear_solution(const ModelConfig& config, double q0, double v0) {
  if (config.alpha != 0.0 || config.n_modes != 1)
    throw ConfigError("closed-form solution needs alpha = 0 and a single mode");
  const double pi4 = std::pow(std::numbers::pi, 4);
  return LinearOscillator(pi4 + 1.0, config.cd * pi4 + config.mu, q0, v0);
}

struct SweepResult {
  std::vector<std::size_t> params;
  std::vector<std::vector<double>> points;  // swept parameter values per grid point
  std::vector<double> cost;
  std::vector<bool> ok;
  std::size_t argmin = 0;
};

/// Brute-force scan over one or two shape parameters; at each grid point the
/// control is fully relaxed. Other parameters stay at r_base.
inline SweepResult sweep_shape(const DiscreteModel& model, const AdmissibleSets& sets, const OptimConfig& cfg,
                               const StateVector& x0, const ControlSignal& u_init, const ShapeParams& r_base,
                               const std::vector<std::size_t>& param_indices, const std::vector<int>& grid_sizes) {
  if (param_indices.empty() || param_indices.size() > 2 || param_indices.size() != grid_sizes.size())
    throw ConfigError("sweep needs one or two parameters, each with a grid size");
  for (std::size_t i = 0; i < param_indices.size(); ++i) {
    if (param_indices[i] >= r_base.size()) throw ConfigError("sweep parameter index out of range");
    if (grid_sizes[i] < 2) throw ConfigError("sweep grid needs at least 2 points per parameter");
  }
  if (sets.shape_box.size() != r_base.size()) throw ConfigError("shape box does not match shape parameters");

  auto axis = [&](std::size_t i) {
    const Interval box = sets.shape_box[param_indices[i]];
    std::vector<double> values(grid_sizes[i]);
    for (int j = 0; j < grid_sizes[i]; ++j)
      values[j] = j + 1 == grid_sizes[i] ? box.hi : box.lo + (box.hi - box.lo) * j / (grid_sizes[i] - 1);
    return values;
  };

  SweepResult out;
  out.params = param_indices;
  const auto first = axis(0);
  const auto second = param_indices.size() == 2 ? axis(1) : std::vector<double>{0.0};
  for (double a : first)
    for (double b : second) {
      std::vector<double> p{a};
      if (param_indices.size() == 2) p.push_back(b);
      out.points.push_back(std::move(p));
    }

  const int n = static_cast<int>(out.points.size());
  out.cost.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> ok(n, 0);
  parallel_for(n, [&](int i) {
    ShapeParams r = r_base;
    r.bounds = sets.shape_box;
    for (std::size_t j = 0; j < param_indices.size(); ++j) r.values[param_indices[j]] = out.points[i][j];
    try {
      const auto relaxed = relax_control(model, sets, cfg, x0, u_init, r);
      out.cost[i] = relaxed.J_opt;
      ok[i] = relaxed.status != OptimStatus::solver_failure && std::isfinite(relaxed.J_opt);
    } catch (const SolverError&) {
      ok[i] = 0;
    }
  });
  out.ok.assign(ok.begin(), ok.end());

  bool found = false;
  for (int i = 0; i < n; ++i) {
    if (!out.ok[i]) continue;
    if (!found || out.cost[i] < out.cost[out.argmin]) out.argmin = static_cast<std::size_t>(i);
    found = true;
  }
  return out;
}

/// |<adjoint, g> - <c, h>| for one forcing pair, where h is the tangent response
/// to g and the adjoint is driven by c. The scale is the larger of the two
/// absolute pairings sum |s_k|.|g_k| and sum |c_k|.|h_k|, which bounds the
/// roundoff of either sum however much its terms cancel. A nonzero perturbation
/// scales the adjoint multipliers by (1 + perturbation).
inline double duality_violation(const DiscreteModel& model, const Trajectory& traj, const History& g,
                                const History& c, double perturbation = 0.0) {
  const History h = tangent_linear_solve(model, traj, g);
  AdjointTrajectory adj = adjoint_sweep(model, traj, c);
  if (perturbation != 0.0)
    for (auto& m : adj.multipliers) m *= 1.0 + perturbation;
  const History s = forcing_sensitivity(model, adj);
  double lhs = 0.0, rhs = 0.0, lhs_abs = 0.0, rhs_abs = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    lhs += s[k].dot(g[k]);
    lhs_abs += s[k].cwiseAbs().dot(g[k].cwiseAbs());
    rhs += c[k].dot(h[k]);
    rhs_abs += c[k].cwiseAbs().dot(h[k].cwiseAbs());
  }
  const double scale = std::max(lhs_abs, rhs_abs);
  return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

inline double duality_probe(const DiscreteModel& model, const Trajectory& traj, int trials, std::uint64_t seed,
                            double perturbation = 0.0) {
  const int nodes = static_cast<int>(traj.states.size());
  const int dim = 2 * model.n_modes();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto random_history = [&] {
    History out(nodes, Vector(dim));
    for (auto& x : out)
      for (int i = 0; i < dim; ++i) x[i] = normal(rng);
    return out;
  };
  std::vector<History> gs, cs;
  for (int t = 0; t < trials; ++t) {
    gs.push_back(random_history());
    cs.push_back(random_history());
  }
  std::vector<double> violations(trials, 0.0);
  parallel_for(trials, [&](int t) { violations[t] = duality_violation(model, traj, gs[t], cs[t], perturbation); });
  double worst = 0.0;
  for (double v : violations) worst = std::max(worst, v);
  return worst;
}

}  // namespace railopt
