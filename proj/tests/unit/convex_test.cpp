#include "lem/convex.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lem::convex;

namespace {

void expect_healthy(const ConvexProgram& prog, const SolveResult& r) {
  ASSERT_TRUE(r.ok()) << r.message;
  const KktReport k = kkt_residuals(prog, r);
  EXPECT_LT(k.max_residual(), 1e-6);
  EXPECT_LT(std::abs(k.duality_gap), 1e-6 * (1.0 + std::abs(k.primal_objective)));
}

ConvexProgram square_above_one() {
  ConvexProgram p;
  const int x = p.add_variable("x");
  p.add_quadratic(x, x, 1.0);
  p.add_inequality({{x, -1.0}}, -1.0, "x_ge_1");
  return p;
}

ConvexProgram simplex_lp(double sign = 1.0) {
  ConvexProgram p;
  const int x = p.add_variable("x", 0.0);
  const int y = p.add_variable("y", 0.0);
  p.add_linear(x, 1.0);
  p.add_linear(y, 1.0);
  p.add_equality({{x, sign}, {y, sign}}, sign, "sum");
  return p;
}

}  // namespace

TEST(Solve, SquareAboveOne) {
  const ConvexProgram p = square_above_one();
  const SolveResult r = solve(p);
  expect_healthy(p, r);
  EXPECT_NEAR(r.x(0), 1.0, 1e-7);
  EXPECT_NEAR(r.ineq_duals(0), 2.0, 1e-6);
  EXPECT_NEAR(r.objective, 1.0, 1e-7);
}

TEST(Solve, SimplexEqualityDual) {
  const ConvexProgram p = simplex_lp();
  const SolveResult r = solve(p);
  expect_healthy(p, r);
  EXPECT_NEAR(r.objective, 1.0, 1e-7);
  EXPECT_NEAR(r.eq_duals(0), -1.0, 1e-7);
  const auto tagged = r.duals_for(p, "sum");
  ASSERT_EQ(tagged.size(), 1u);
  EXPECT_EQ(tagged[0].first, 0);
}

TEST(Solve, FlippedRowFlipsDual) {
  const SolveResult a = solve(simplex_lp(1.0));
  const SolveResult b = solve(simplex_lp(-1.0));
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_NEAR(a.eq_duals(0), -b.eq_duals(0), 1e-9);
}

TEST(Solve, RandomEqualityQpMatchesKktSolve) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5, m = 2;
    Eigen::MatrixXd mtx(n, n), a(m, n);
    Eigen::VectorXd c(n), b(m);
    for (auto& v : mtx.reshaped()) v = g(rng);
    for (auto& v : a.reshaped()) v = g(rng);
    for (auto& v : c) v = g(rng);
    for (auto& v : b) v = g(rng);
    const Eigen::MatrixXd h = mtx.transpose() * mtx + Eigen::MatrixXd::Identity(n, n);

    ConvexProgram p;
    for (int k = 0; k < n; ++k) p.add_variable("x" + std::to_string(k));
    for (int i = 0; i < n; ++i) {
      p.add_linear(i, c(i));
      p.add_quadratic(i, i, 0.5 * h(i, i));
      for (int j = i + 1; j < n; ++j) p.add_quadratic(i, j, h(i, j));
    }
    for (int r = 0; r < m; ++r) {
      LinearExpr e;
      for (int k = 0; k < n; ++k) e.push_back({k, a(r, k)});
      p.add_equality(e, b(r), "row");
    }
    const SolveResult res = solve(p);
    expect_healthy(p, res);

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = h;
    kkt.topRightCorner(n, m) = a.transpose();
    kkt.bottomLeftCorner(m, n) = a;
    Eigen::VectorXd rhs(n + m);
    rhs << -c, b;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    EXPECT_LT((res.x - sol.head(n)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((res.eq_duals - sol.tail(m)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Solve, BoundedLpWithActiveBounds) {
  ConvexProgram p;
  const int x = p.add_variable("x", -1.0, 2.0);
  const int y = p.add_variable("y", 0.0, 3.0);
  p.add_linear(x, -1.0);
  p.add_linear(y, 1.0);
  p.add_inequality({{x, 1.0}, {y, -1.0}}, 1.0, "xy");
  const SolveResult r = solve(p);
  expect_healthy(p, r);
  // optimal face x − y = 1, y ∈ [0, 1]
  EXPECT_NEAR(r.x(0) - r.x(1), 1.0, 1e-7);
  EXPECT_GE(r.x(1), -1e-7);
  EXPECT_LE(r.x(1), 1.0 + 1e-7);
  EXPECT_NEAR(r.objective, -1.0, 1e-7);
}

TEST(Solve, FixedBoundsAndDependentRows) {
  ConvexProgram p;
  const int x = p.add_variable("x", 0.5, 0.5);
  const int y = p.add_variable("y");
  p.add_quadratic(y, y, 1.0);
  p.add_equality({{x, 1.0}, {y, 1.0}}, 1.0, "a");
  p.add_equality({{x, 2.0}, {y, 2.0}}, 2.0, "b");
  const SolveResult r = solve(p);
  expect_healthy(p, r);
  EXPECT_NEAR(r.x(1), 0.5, 1e-8);
}

TEST(Solve, ReportsInfeasible) {
  ConvexProgram p;
  const int x = p.add_variable("x");
  p.add_linear(x, 1.0);
  p.add_inequality({{x, 1.0}}, 1.0, "le");
  p.add_inequality({{x, -1.0}}, -2.0, "ge");
  const SolveResult r = solve(p);
  EXPECT_EQ(r.status, SolveStatus::infeasible);
  EXPECT_THROW(kkt_residuals(p, r), std::logic_error);
}

TEST(Solve, ReportsInconsistentEqualities) {
  ConvexProgram p;
  const int x = p.add_variable("x", 0.0, 10.0);
  p.add_linear(x, 1.0);
  p.add_equality({{x, 1.0}}, 1.0, "a");
  p.add_equality({{x, 1.0}}, 2.0, "b");
  EXPECT_NE(solve(p).status, SolveStatus::optimal);
}

TEST(Solve, ReportsEmptyBounds) {
  ConvexProgram p;
  p.add_variable("x", 1.0, 0.0);
  EXPECT_EQ(solve(p).status, SolveStatus::infeasible);
}

TEST(Solve, ReportsUnbounded) {
  ConvexProgram p;
  const int x = p.add_variable("x");
  p.add_linear(x, 1.0);
  p.add_inequality({{x, 1.0}}, 0.0, "le");
  EXPECT_EQ(solve(p).status, SolveStatus::unbounded);
}

TEST(Solve, RejectsMalformedPrograms) {
  ConvexProgram p;
  const int x = p.add_variable("x");
  p.add_quadratic(x, x, -1.0);
  EXPECT_THROW(solve(p), std::invalid_argument);
  ConvexProgram q;
  q.add_variable("x");
  q.add_equality({{3, 1.0}}, 0.0, "bad");
  EXPECT_THROW(solve(q), std::invalid_argument);
}

TEST(Solve, BitIdenticalRepeats) {
  const ConvexProgram p = square_above_one();
  const SolveResult a = solve(p), b = solve(p);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.ineq_duals, b.ineq_duals);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Kkt, PerturbedPrimalShowsStationarityResidual) {
  const ConvexProgram p = square_above_one();
  SolveResult r = solve(p);
  ASSERT_TRUE(r.ok());
  EXPECT_LT(kkt_residuals(p, r).max_residual(), 1e-6);
  r.x(0) += 1e-2;
  EXPECT_GT(kkt_residuals(p, r).stationarity, 1e-3);
}
