#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace lem::net3p;
using fixtures::Complex;

TEST(PhaseSet, ParsesLetters) {
  const auto s = PhaseSet::from_string("ac");
  EXPECT_TRUE(s.contains(Phase::a));
  EXPECT_FALSE(s.contains(Phase::b));
  EXPECT_TRUE(s.contains(Phase::c));
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.to_string(), "ac");
  EXPECT_THROW(PhaseSet::from_string("ad"), NetworkError);
}

TEST(Bus, DefaultNominalsAreUnitMagnitude) {
  for (Phase p : kAllPhases) EXPECT_NEAR(std::abs(default_nominal(p)), 1.0, 1e-15);
  EXPECT_NEAR(std::arg(default_nominal(Phase::b)) * 180.0 / std::numbers::pi, -120.0, 1e-12);
  EXPECT_NEAR(std::arg(default_nominal(Phase::c)) * 180.0 / std::numbers::pi, 120.0, 1e-12);
}

TEST(Network, RejectsInvalidTopology) {
  using fixtures::bus;
  using fixtures::scalar_branch;
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")}, {}), NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0"), bus("1")}, {scalar_branch("l", "0", "1", {0.01, 0.02})}), NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("0")}, {scalar_branch("l", "0", "0", {0.01, 0.02})}),
               NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")}, {scalar_branch("l", "0", "2", {0.01, 0.02})}),
               NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1"), bus("2")},
                                 {scalar_branch("l", "0", "1", {0.01, 0.02})}),
               NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")},
                                 {scalar_branch("l", "0", "1", {0.01, 0.02}, 5.0, PhaseSet::all())}),
               NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")}, {scalar_branch("l", "0", "1", {0.0, 0.0})}),
               NetworkError);
  EXPECT_THROW(ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")},
                                 {scalar_branch("l", "0", "1", {0.01, 0.02}, -1.0)}),
               NetworkError);
}

TEST(Network, RejectsAsymmetricImpedance) {
  auto br = fixtures::scalar_branch("l", "0", "1", {0.01, 0.02}, 5.0, PhaseSet::all());
  br.z(0, 1) = {0.001, 0.0};
  EXPECT_THROW(ThreePhaseNetwork({fixtures::bus("0", BusKind::slack, PhaseSet::all()),
                                  fixtures::bus("1", BusKind::pq, PhaseSet::all())},
                                 {br}),
               NetworkError);
}

TEST(Network, NodePhaseIndexing) {
  const auto net = fixtures::four_bus_3ph();
  EXPECT_EQ(net.node_phase_count(), 12u);
  EXPECT_EQ(net.branch_phases().size(), 9u);
  EXPECT_EQ(*net.node_phase_index(1, Phase::c), 5u);
  EXPECT_EQ(net.slack_bus(), 0u);
}

TEST(Admittance, TwoBusScalar) {
  const auto net = fixtures::two_bus();
  const AdmittanceMatrix y = build_admittance(net);
  ASSERT_EQ(y.rows(), 2);
  const Complex yy(20.0, -40.0);
  EXPECT_NEAR(std::abs(y(0, 0) - yy), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(y(1, 1) - yy), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(y(0, 1) + yy), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(y(1, 0) + yy), 0.0, 1e-12);
}

TEST(Admittance, TriangleHandStamped) {
  const Complex z(0.02, 0.04);
  const auto net = fixtures::triangle(z);
  const AdmittanceMatrix y = build_admittance(net);
  const Complex yb = 1.0 / z;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(std::abs(y(r, c) - (r == c ? 2.0 * yb : -yb)), 0.0, 1e-12);
}

TEST(Admittance, SymmetricWithZeroRowSums) {
  for (const auto& net : {fixtures::two_bus(), fixtures::triangle(), fixtures::chain3(), fixtures::four_bus_3ph()}) {
    const AdmittanceMatrix y = build_admittance(net);
    EXPECT_LT((y - y.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(y.rowwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Incidence, TwoBusOrientation) {
  const IncidenceMatrix a = build_incidence(fixtures::two_bus());
  ASSERT_EQ(a.rows(), 1);
  EXPECT_EQ(a(0, 0), 1.0);
  EXPECT_EQ(a(0, 1), -1.0);
}

TEST(Incidence, ChainRowsArePairs) {
  const IncidenceMatrix a = build_incidence(fixtures::chain3());
  ASSERT_EQ(a.rows(), 2);
  ASSERT_EQ(a.cols(), 3);
  for (int r = 0; r < a.rows(); ++r) {
    EXPECT_EQ(a.row(r).maxCoeff(), 1.0);
    EXPECT_EQ(a.row(r).minCoeff(), -1.0);
    EXPECT_EQ(a.row(r).cwiseAbs().sum(), 2.0);
  }
}

TEST(Incidence, TriangleLaplacian) {
  const IncidenceMatrix a = build_incidence(fixtures::triangle());
  const Eigen::MatrixXd l = a.transpose() * a;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_EQ(l(r, c), r == c ? 2.0 : -1.0);
}

TEST(Incidence, KclIdentityForRandomCurrents) {
  const auto net = fixtures::four_bus_3ph();
  const IncidenceMatrix a = build_incidence(net);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd ib(a.rows());
    for (auto& x : ib) x = u(rng);
    const Eigen::VectorXd nodal = a.transpose() * ib;
    Eigen::VectorXd kcl = Eigen::VectorXd::Zero(a.cols());
    for (std::size_t k = 0; k < net.branch_phases().size(); ++k) {
      const auto& bp = net.branch_phases()[k];
      const auto& br = net.branches()[bp.branch];
      kcl[static_cast<Eigen::Index>(*net.node_phase_index(net.bus_index(br.from), bp.phase))] += ib[static_cast<Eigen::Index>(k)];
      kcl[static_cast<Eigen::Index>(*net.node_phase_index(net.bus_index(br.to), bp.phase))] -= ib[static_cast<Eigen::Index>(k)];
    }
    EXPECT_LT((nodal - kcl).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Incidence, BranchCurrentsReproduceNodalInjections) {
  const auto net = fixtures::four_bus_3ph();
  Eigen::VectorXcd v(12);
  for (std::size_t k = 0; k < 12; ++k) v[static_cast<Eigen::Index>(k)] = net.nominal_voltage(k) * (1.0 - 0.01 * static_cast<double>(k % 5));
  const Eigen::VectorXcd ib = branch_currents(net, v);
  const Eigen::VectorXcd nodal = build_incidence(net).transpose().cast<Complex>() * ib;
  EXPECT_LT((nodal - build_admittance(net) * v).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PowerFlow, ZeroInjectionIsNominal) {
  const auto net = fixtures::four_bus_3ph();
  const auto r = power_flow(net, Eigen::VectorXcd::Zero(12));
  ASSERT_TRUE(r.converged);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(r.v[static_cast<Eigen::Index>(k)], net.nominal_voltage(k));
  EXPECT_LT(r.i.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PowerFlow, TwoBusMatchesClosedForm) {
  const Complex z(0.01, 0.02);
  const auto net = fixtures::two_bus(z);
  const double p = 0.1, q = 0.05;  // consumed
  Eigen::VectorXcd s(2);
  s << 0.0, Complex(-p, -q);
  const auto r = power_flow(net, s);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.residual, 1e-10);
  // |V|⁴ + (2(PR + QX) − 1)|V|² + (P² + Q²)|z|² = 0, high-voltage root
  const double b = 2.0 * (p * z.real() + q * z.imag()) - 1.0;
  const double c = (p * p + q * q) * std::norm(z);
  const double v2 = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
  EXPECT_NEAR(std::abs(r.v[1]), std::sqrt(v2), 1e-12);
}

TEST(PowerFlow, BeyondNosePointDiverges) {
  const auto net = fixtures::two_bus();
  Eigen::VectorXcd s(2);
  s << 0.0, Complex(-20.0, 0.0);
  const auto r = power_flow(net, s);
  EXPECT_FALSE(r.converged);
}

TEST(PowerFlow, SolutionReproducesInjectionsThroughBilinearForms) {
  const auto net = fixtures::four_bus_3ph();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.3, 0.1);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(12);
    for (Eigen::Index k = 3; k < 12; ++k) s[k] = Complex(u(rng), 0.3 * u(rng));
    const auto r = power_flow(net, s);
    ASSERT_TRUE(r.converged);
    for (Eigen::Index k = 3; k < 12; ++k) {
      const double vr = r.v[k].real(), vi = r.v[k].imag(), ir = r.i[k].real(), ii = r.i[k].imag();
      EXPECT_NEAR(vr * ir + vi * ii, s[k].real(), 1e-8);
      EXPECT_NEAR(-vr * ii + vi * ir, s[k].imag(), 1e-8);
    }
  }
}
