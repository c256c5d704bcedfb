#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "railopt/model.hpp"
#include "test_support.hpp"

namespace railopt {
namespace {

using testing::Rng;
using testing::small_config;
namespace ref = testing::reference;

constexpr double kPi = std::numbers::pi;

TEST(ModelConfig, DefaultsAndQuadrature) {
  const ModelConfig c;
  EXPECT_EQ(c.n_modes, 16);
  EXPECT_EQ(c.quad_points(), 64);
  EXPECT_DOUBLE_EQ(c.dt, 1e-3);
  EXPECT_DOUBLE_EQ(c.gamma, 0.1);
}

TEST(ModelConfig, RejectsInvalidValues) {
  auto expect_message = [](ModelConfig c, const std::string& needle) {
    try {
      validate(c);
      FAIL() << "accepted invalid config, expected: " << needle;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
      EXPECT_EQ(e.category(), ErrorCategory::invalid_config);
    }
  };
  ModelConfig c;
  c.gamma = 0.0;
  expect_message(c, "gamma must be positive");
  c = {};
  c.tau = -1.0;
  expect_message(c, "tau must be positive");
  c = {};
  c.dt = 0.0;
  expect_message(c, "dt must be positive");
  c = {};
  c.alpha = -1.0;
  expect_message(c, "alpha");
  c = {};
  c.n_modes = 0;
  expect_message(c, "n_modes");
  c = {};
  c.n_modes = 8;
  c.n_quad = 20;
  expect_message(c, "n_quad");
}

TEST(DiscreteModel, StiffnessIsFourthPowerOfWavenumber) {
  const DiscreteModel one(small_config(1));
  EXPECT_NEAR(one.stiffness()[0], 97.40909103400242, 1e-12);
  const DiscreteModel m(small_config(12));
  for (int n = 1; n <= 12; ++n) EXPECT_DOUBLE_EQ(m.stiffness()[n - 1], std::pow(n * kPi, 4));
}

TEST(DiscreteModel, QuadratureGrid) {
  ModelConfig c = small_config(2);
  c.n_quad = 8;
  const DiscreteModel m(c);
  ASSERT_EQ(m.quad_grid().size(), 7);
  for (int j = 0; j < 7; ++j) EXPECT_DOUBLE_EQ(m.quad_grid()[j], (j + 1) / 8.0);
  EXPECT_EQ(m.sine_table().rows(), 7);
  EXPECT_EQ(m.sine_table().cols(), 2);
}

TEST(DiscreteModel, DiscreteSineOrthogonality) {
  for (auto [n, quad] : {std::pair{2, 8}, std::pair{8, 32}, std::pair{16, 64}, std::pair{5, 16}}) {
    ModelConfig c = small_config(n);
    c.n_quad = quad;
    const DiscreteModel m(c);
    const Matrix gram = (2.0 / quad) * m.sine_table().transpose() * m.sine_table();
    EXPECT_LE((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-13) << "N=" << n << " M=" << quad;
  }
}

TEST(DiscreteModel, EnergyWeights) {
  const DiscreteModel m(small_config(1));
  ASSERT_EQ(m.energy_weights().size(), 2);
  EXPECT_DOUBLE_EQ(m.energy_weights()[0], (std::pow(kPi, 4) + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.energy_weights()[1], 0.5);
}

TEST(DiscreteModel, ProjectSizeMismatch) {
  const DiscreteModel m(small_config(4));
  try {
    m.project(Vector::Zero(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::size_mismatch);
  }
}

TEST(DiscreteModel, SynthesizeProjectRoundTrip) {
  Rng rng(11);
  const DiscreteModel m(small_config(10));
  for (int trial = 0; trial < 20; ++trial) {
    const Vector q = rng.normal_vector(10);
    EXPECT_LE((m.project(m.synthesize(q)) - q).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(NonlinearTerm, CubeOfFirstMode) {
  for (double alpha : {1.0, 2.5}) {
    ModelConfig c = small_config(8, alpha);
    const DiscreteModel m(c);
    Vector q = Vector::Zero(8);
    q[0] = 1.0;
    const Vector out = nonlinear_term(m, q);
    for (int n = 0; n < 8; ++n) {
      const double expected = n == 0 ? -0.75 * alpha : (n == 2 ? 0.25 * alpha : 0.0);
      EXPECT_NEAR(out[n], expected, 1e-13) << "mode " << n + 1;
    }
  }
}

TEST(NonlinearTerm, ZeroCases) {
  Rng rng(3);
  const DiscreteModel off(small_config(6, 0.0));
  EXPECT_EQ(nonlinear_term(off, rng.normal_vector(6)), Vector::Zero(6));
  EXPECT_EQ(nonlinear_jacobian_apply(off, rng.normal_vector(6), rng.normal_vector(6)), Vector::Zero(6));
  const DiscreteModel on(small_config(6));
  EXPECT_EQ(nonlinear_term(on, Vector::Zero(6)), Vector::Zero(6));
  EXPECT_EQ(nonlinear_jacobian_apply(on, rng.normal_vector(6), Vector::Zero(6)), Vector::Zero(6));
}

TEST(NonlinearTerm, MatchesReferenceModel) {
  const DiscreteModel m(small_config(4));
  const Vector q = Eigen::Map<const Vector>(ref::kCubicQ, 4);
  const Vector out = nonlinear_term(m, q);
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(out[n], ref::kCubicAtQ[n], 1e-15);
}

TEST(NonlinearTerm, OddAndCubicHomogeneous) {
  Rng rng(5);
  const DiscreteModel m(small_config(7));
  for (int trial = 0; trial < 20; ++trial) {
    const Vector q = rng.normal_vector(7);
    const double s = rng.uniform(-3.0, 3.0);
    const Vector base = nonlinear_term(m, q);
    EXPECT_LE((nonlinear_term(m, -q) + base).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LE((nonlinear_term(m, s * q) - s * s * s * base).cwiseAbs().maxCoeff(),
              1e-12 * (1.0 + std::abs(s * s * s) * base.cwiseAbs().maxCoeff()));
  }
}

// Property: the linearization matches central differences of the cubic term.
TEST(NonlinearJacobian, MatchesFiniteDifferences) {
  Rng rng(17);
  const DiscreteModel m(small_config(6));
  for (int trial = 0; trial < 25; ++trial) {
    const Vector q = rng.normal_vector(6);
    const Vector dq = rng.normal_vector(6);
    const double h = 1e-5;
    const Vector fd = (nonlinear_term(m, q + h * dq) - nonlinear_term(m, q - h * dq)) / (2.0 * h);
    const Vector exact = nonlinear_jacobian_apply(m, q, dq);
    EXPECT_LE((fd - exact).norm(), 1e-8 * (1.0 + exact.norm()));
    EXPECT_LE((nonlinear_jacobian(m, q) * dq - exact).norm(), 1e-12 * (1.0 + exact.norm()));
  }
}

TEST(NonlinearJacobian, SymmetricAndNegativeSemidefinite) {
  Rng rng(23);
  const DiscreteModel m(small_config(9));
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix j = nonlinear_jacobian(m, rng.normal_vector(9));
    EXPECT_LE((j - j.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (j + j.transpose()));
    EXPECT_LE(eig.eigenvalues().maxCoeff(), 1e-12);
  }
}

TEST(EnergyNorm, AnalyticValues) {
  const DiscreteModel m(small_config(4));
  StateVector x = StateVector::zero(4);
  EXPECT_EQ(energy_norm_sq(m, x), 0.0);
  x.q[0] = 1.0;
  EXPECT_NEAR(energy_norm_sq(m, x), 49.20454551700121, 1e-12);
  x = StateVector::zero(4);
  x.v[1] = 1.0;
  EXPECT_DOUBLE_EQ(energy_norm_sq(m, x), 0.5);
}

TEST(EnergyNorm, QuadraticHomogeneity) {
  Rng rng(29);
  const DiscreteModel m(small_config(5));
  for (int trial = 0; trial < 10; ++trial) {
    const StateVector x = rng.state(5);
    const double s = rng.uniform(-4.0, 4.0);
    const StateVector sx{s * x.q, s * x.v};
    EXPECT_NEAR(energy_norm_sq(m, sx), s * s * energy_norm_sq(m, x), 1e-12 * s * s * energy_norm_sq(m, x));
  }
}

TEST(PhysicalState, SecondSineProjectsToSecondMode) {
  const DiscreteModel m(small_config(6));
  const Vector& x = m.quad_grid();
  const Vector w0 = (2.0 * kPi * x.array()).sin().matrix();
  const StateVector s = state_from_physical(m, w0, Vector::Zero(x.size()));
  for (int n = 0; n < 6; ++n) EXPECT_NEAR(s.q[n], n == 1 ? 1.0 : 0.0, 1e-13);
  EXPECT_EQ(s.v, Vector::Zero(6));

  const StateVector zero = state_from_physical(m, Vector::Zero(x.size()), Vector::Zero(x.size()));
  EXPECT_EQ(zero.q, Vector::Zero(6));
}

TEST(PhysicalState, RoundTrip) {
  Rng rng(31);
  const DiscreteModel m(small_config(8));
  const StateVector x = rng.state(8);
  const PhysicalState p = state_to_physical(m, x);
  const StateVector back = state_from_physical(m, p.w, p.v);
  EXPECT_LE((back.q - x.q).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LE((back.v - x.v).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(state_from_physical(m, Vector::Zero(4), Vector::Zero(4)), Error);
}

}  // namespace
}  // namespace railopt
