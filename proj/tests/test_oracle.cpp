#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

#include <gtest/gtest.h>

#include "railopt/oracle.hpp"
#include "test_support.hpp"

namespace railopt {
namespace {

using testing::first_mode;
using testing::gaussian;
using testing::Rng;
using testing::small_config;
namespace ref = testing::reference;

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("RAILOPT_THREADS")) saved_ = old, had_ = true;
    setenv("RAILOPT_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (had_) setenv("RAILOPT_THREADS", saved_.c_str(), 1);
    else unsetenv("RAILOPT_THREADS");
  }

 private:
  std::string saved_;
  bool had_ = false;
};

TEST(ThreadBudget, ReadsEnvironment) {
  {
    ThreadsEnv env("3");
    EXPECT_EQ(thread_budget(), 3);
  }
  {
    ThreadsEnv env("garbage");
    EXPECT_GE(thread_budget(), 1);
  }
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagatesErrors) {
  ThreadsEnv env("4");
  std::vector<int> hits(100, 0);
  parallel_for(100, [&](int i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, [](int i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(FdGradient, ZeroInstanceAndEpsRange) {
  const DiscreteModel m(small_config(3, 1.0, 1e-2));
  const ControlSignal u{Vector::Zero(make_time_grid(m).n_nodes()), 10.0};
  const Gradient g = fd_gradient(m, u, gaussian(0.4, 0.1), StateVector::zero(3), 1e-5);
  EXPECT_EQ(g.grad_u, Vector::Zero(u.samples.size()));
  EXPECT_EQ(g.grad_r, Vector::Zero(2));
  EXPECT_THROW(fd_gradient(m, u, gaussian(0.4, 0.1), StateVector::zero(3), 1e-2), ConfigError);
  EXPECT_THROW(fd_gradient(m, u, gaussian(0.4, 0.1), StateVector::zero(3), 1e-9), ConfigError);
}

TEST(FdGradient, AgreesWithAdjointPerNode) {
  Rng rng(167);
  const DiscreteModel m(small_config(3, 1.0, 2e-2));
  const ControlSignal u = rng.control(make_time_grid(m));
  const StateVector x0 = rng.state(3);
  const ShapeParams r = gaussian(0.37, 0.11);
  const Gradient fd = fd_gradient(m, u, r, x0, 1e-5);
  const auto traj = forward_solve(m, u, r, x0);
  const Gradient exact = compute_gradient(m, traj, adjoint_solve(m, traj));
  EXPECT_LE((fd.grad_u - exact.grad_u).norm() / exact.grad_u.norm(), 1e-6);
  EXPECT_LE((fd.grad_r - exact.grad_r).norm() / exact.grad_r.norm(), 1e-6);
}

// Central differences on a non-quadratic direction have O(eps^2) truncation error.
TEST(FdGradient, SecondOrderInEps) {
  const DiscreteModel m(small_config(4, 0.0, 1e-2));
  Rng rng(173);
  const ControlSignal u = rng.control(make_time_grid(m), 3.0);
  const StateVector x0 = first_mode(4);
  const ShapeParams r = gaussian(0.37, 0.08);
  const auto traj = forward_solve(m, u, r, x0);
  const double exact = compute_gradient(m, traj, adjoint_solve(m, traj)).grad_r[1];
  double err[2];
  const double eps[2] = {1e-3, 1e-4};
  for (int i = 0; i < 2; ++i) err[i] = std::abs(fd_gradient(m, u, r, x0, eps[i]).grad_r[1] - exact);
  const double slope = std::log10(err[0] / err[1]);
  EXPECT_GE(slope, 1.8);
  EXPECT_LE(slope, 2.2);
  const double tiny = std::abs(fd_gradient(m, u, r, x0, 1e-5).grad_r[1] - exact);
  EXPECT_LT(tiny, err[1]);
}

TEST(GradCheck, ReportStructure) {
  Rng rng(179);
  const DiscreteModel m(small_config(4, 1.0, 1e-2));
  const ControlSignal u = rng.control(make_time_grid(m));
  const auto report = grad_check(m, u, gaussian(0.42, 0.13), rng.state(4), 10, 1e-5, 9);
  ASSERT_EQ(report.labels.size(), 12u);
  EXPECT_EQ(report.labels[0], "u_dir_0");
  EXPECT_EQ(report.labels[11], "r_1");
  EXPECT_EQ(report.eps, 1e-5);
  EXPECT_TRUE(report.pass);
  EXPECT_EQ(report.pass, report.worst <= kGradCheckThreshold);
  for (double e : report.errors) EXPECT_LE(e, report.worst);
}

TEST(GradCheck, DeterministicAcrossThreadCounts) {
  Rng rng(181);
  const DiscreteModel m(small_config(4, 1.0, 1e-2));
  const ControlSignal u = rng.control(make_time_grid(m));
  const StateVector x0 = rng.state(4);
  GradCheckReport one, many;
  {
    ThreadsEnv env("1");
    one = grad_check(m, u, gaussian(0.42, 0.13), x0, 6, 1e-5, 9);
  }
  {
    ThreadsEnv env("4");
    many = grad_check(m, u, gaussian(0.42, 0.13), x0, 6, 1e-5, 9);
  }
  EXPECT_EQ(one.fd_values, many.fd_values);
  EXPECT_EQ(one.adjoint_values, many.adjoint_values);
  EXPECT_EQ(one.worst, many.worst);
}

TEST(LinearOscillator, UndampedIsCosine) {
  ModelConfig c = small_config(1, 0.0);
  c.mu = 0.0;
  c.cd = 0.0;
  const auto osc = analytic_linear_solution(c, 1.0, 0.0);
  const double omega = std::sqrt(std::pow(std::numbers::pi, 4) + 1.0);
  for (double t : {0.0, 0.1, 0.37, 1.0, 5.0}) {
    EXPECT_NEAR(osc.at(t).q[0], std::cos(omega * t), 1e-13);
    EXPECT_NEAR(osc.at(t).v[0], -omega * std::sin(omega * t), 1e-12);
  }
}

TEST(LinearOscillator, InitialConditionAndEnergy) {
  ModelConfig c = small_config(1, 0.0);
  c.mu = 0.0;
  c.cd = 0.0;
  const DiscreteModel m(c);
  const auto osc = analytic_linear_solution(c, 0.3, -2.0);
  EXPECT_EQ(osc.at(0.0).q[0], 0.3);
  EXPECT_EQ(osc.at(0.0).v[0], -2.0);
  const double e0 = energy_norm_sq(m, osc.at(0.0));
  for (double t : {0.2, 0.9, 3.3}) EXPECT_NEAR(energy_norm_sq(m, osc.at(t)), e0, 1e-12 * e0);
}

TEST(LinearOscillator, AllDampingRegimes) {
  ModelConfig c = small_config(1, 0.0);
  const auto under = analytic_linear_solution(c, 1.0, 0.0).at(1.0);
  EXPECT_NEAR(under.q[0], ref::kOscillatorQ, 1e-14);
  EXPECT_NEAR(under.v[0], ref::kOscillatorV, 1e-13);

  c.mu = 40.0;
  c.cd = 0.3;
  const auto over = analytic_linear_solution(c, 1.0, -2.0).at(0.5);
  EXPECT_NEAR(over.q[0], ref::kOverdampedQ, 1e-14);
  EXPECT_NEAR(over.v[0], ref::kOverdampedV, 1e-13);

  // critical damping is the common limit of both neighbours
  const double pi4 = std::pow(std::numbers::pi, 4);
  const double critical = 2.0 * std::sqrt(pi4 + 1.0);
  const LinearOscillator exact(pi4 + 1.0, critical, 1.0, 0.5);
  const LinearOscillator below(pi4 + 1.0, critical * (1.0 - 1e-7), 1.0, 0.5);
  const LinearOscillator above(pi4 + 1.0, critical * (1.0 + 1e-7), 1.0, 0.5);
  for (double t : {0.05, 0.3, 1.0}) {
    EXPECT_NEAR(exact.at(t).q[0], below.at(t).q[0], 1e-6);
    EXPECT_NEAR(exact.at(t).q[0], above.at(t).q[0], 1e-6);
  }
  EXPECT_THROW(analytic_linear_solution(small_config(2, 0.0), 1.0, 0.0), ConfigError);
  EXPECT_THROW(analytic_linear_solution(small_config(1, 1.0), 1.0, 0.0), ConfigError);
}

TEST(Duality, ZeroForcingAndRandomTrials) {
  Rng rng(191);
  const DiscreteModel m(small_config(8));
  const TimeGrid g = make_time_grid(m);
  const auto traj = forward_solve(m, rng.control(g), gaussian(0.4, 0.1), rng.state(8));
  const History zero(g.n_nodes(), Vector::Zero(16));
  EXPECT_EQ(duality_violation(m, traj, zero, zero), 0.0);
  EXPECT_LT(duality_probe(m, traj, 20, 3), 1e-12);
}

TEST(Duality, DetectsPerturbedAdjoint) {
  Rng rng(193);
  const DiscreteModel m(small_config(4));
  const auto traj = forward_solve(m, rng.control(make_time_grid(m)), gaussian(0.4, 0.1), rng.state(4));
  const double clean = duality_probe(m, traj, 5, 11);
  const double dirty = duality_probe(m, traj, 5, 11, 1e-8);
  EXPECT_LT(clean, 1e-12);
  EXPECT_GT(dirty, 1e-12);
  EXPECT_GT(dirty, 100.0 * clean);
}

class SweepOracle : public ::testing::Test {
 protected:
  static constexpr int kPoints = 9;
  const DiscreteModel model{small_config(4, 1.0, 1e-2)};
  const AdmissibleSets sets{10.0, {{0.1, 0.9}, {0.05, 0.2}}};
  ControlSignal zeros() const { return {Vector::Zero(make_time_grid(model).n_nodes()), 10.0}; }
};

TEST_F(SweepOracle, SymmetricBenchmarkIsSymmetric) {
  const auto res = sweep_shape(model, sets, {}, first_mode(4), zeros(), gaussian(0.3, 0.2), {0}, {kPoints});
  ASSERT_EQ(res.points.size(), static_cast<std::size_t>(kPoints));
  EXPECT_EQ(res.points.front()[0], 0.1);
  EXPECT_EQ(res.points.back()[0], 0.9);
  for (int i = 0; i < kPoints; ++i) {
    ASSERT_TRUE(res.ok[i]);
    EXPECT_LE(std::abs(res.cost[i] - res.cost[kPoints - 1 - i]), 1e-6 * res.cost[i]);
  }
  EXPECT_EQ(res.argmin, static_cast<std::size_t>(kPoints / 2));
}

TEST_F(SweepOracle, OptimizerMatchesSweepArgmin) {
  const auto opt = optimize(model, sets, {}, first_mode(4), zeros(), gaussian(0.3, 0.1));
  ASSERT_EQ(opt.status, OptimStatus::converged);
  ShapeParams base = gaussian(0.3, 0.1);
  base.values[1] = opt.r_opt.values[1];
  const auto res = sweep_shape(model, sets, {}, first_mode(4), zeros(), base, {0}, {kPoints});
  const double cell = 0.8 / (kPoints - 1);
  EXPECT_LE(std::abs(opt.r_opt.values[0] - res.points[res.argmin][0]), cell);
  EXPECT_LE(opt.J_opt, res.cost[res.argmin] + 1e-8);
}

TEST_F(SweepOracle, HeavyPenaltyFlattensLandscape) {
  ModelConfig c = small_config(4, 1.0, 1e-2);
  c.gamma = 1e6;
  const DiscreteModel heavy(c);
  const ControlSignal u{Vector::Zero(make_time_grid(heavy).n_nodes()), 10.0};
  const auto res = sweep_shape(heavy, sets, {}, first_mode(4), u, gaussian(0.3, 0.1), {0}, {kPoints});
  double lo = 1e300, hi = 0.0;
  for (double j : res.cost) {
    lo = std::min(lo, j);
    hi = std::max(hi, j);
  }
  EXPECT_LE(hi - lo, 1e-3 * lo);
}

TEST_F(SweepOracle, TwoParameterGridAndDeterminism) {
  SweepResult one, many;
  {
    ThreadsEnv env("1");
    one = sweep_shape(model, sets, {}, first_mode(4), zeros(), gaussian(0.3, 0.1), {0, 1}, {3, 2});
  }
  {
    ThreadsEnv env("3");
    many = sweep_shape(model, sets, {}, first_mode(4), zeros(), gaussian(0.3, 0.1), {0, 1}, {3, 2});
  }
  ASSERT_EQ(one.points.size(), 6u);
  EXPECT_EQ(one.points[1], (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(one.cost, many.cost);
  EXPECT_EQ(one.argmin, many.argmin);
  EXPECT_THROW(sweep_shape(model, sets, {}, first_mode(4), zeros(), gaussian(0.3, 0.1), {5}, {3}), ConfigError);
}

}  // namespace
}  // namespace railopt
