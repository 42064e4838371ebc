#include "fixtures.hpp"
#include "sm_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lem::sm;
using fixtures::dca;
using fixtures::setpoint_a;
using lem::net3p::Phase;

namespace {

constexpr auto G = CommodityKind::generator;
constexpr auto L = CommodityKind::load;

SmClearingResult clear_ok(const std::vector<DcaBid>& bids, const PmSetpoint& sp, const SmOptions& o = {}) {
  const SmClearing c = clear_sm_lexicographic("s", bids, sp, o);
  EXPECT_TRUE(c.ok()) << c.message;
  return c.result.value_or(SmClearingResult{});
}

DcaSchedule schedule(double p, double q) {
  DcaSchedule s;
  s.phases[0] = DcaPhaseSchedule{p, q, 0.0, 0.0};
  return s;
}

void expect_invariants(const std::vector<DcaBid>& bids, const PmSetpoint& sp, const SmClearingResult& r, double eps) {
  for (Phase ph : lem::net3p::kAllPhases) {
    if (!sp.at(ph)) continue;
    double sp_sum = 0.0, sq_sum = 0.0;
    for (std::size_t j = 0; j < bids.size(); ++j) {
      const auto& b = bids[j].at(ph);
      const auto& s = r.schedules[j].at(ph);
      if (!b) continue;
      ASSERT_TRUE(s);
      sp_sum += s->p;
      sq_sum += s->q;
      EXPECT_GE(s->dp, 0.0);
      EXPECT_GE(s->dq, 0.0);
      EXPECT_LE(b->p_min, s->p - s->dp + 1e-12);
      EXPECT_LE(s->p + s->dp, b->p_max + 1e-12);
      EXPECT_LE(b->q_min, s->q - s->dq + 1e-12);
      EXPECT_LE(s->q + s->dq, b->q_max + 1e-12);
    }
    EXPECT_LT(std::abs(sp_sum - sp.at(ph)->p), 1e-8);
    EXPECT_LT(std::abs(sq_sum - sp.at(ph)->q), 1e-8);
  }
  ASSERT_EQ(r.stages.size(), 3u);
  const double f1 = r.stages[0].value, f3 = r.stages[1].value;
  EXPECT_LE(r.final_f1, f1 + eps * std::abs(f1) + 1e-8);
  EXPECT_LE(r.final_f3, f3 + eps * std::abs(f3) + 1e-8);
}

}  // namespace

TEST(DcaBid, ValidatesInvariants) {
  EXPECT_NO_THROW(dca("g", G, 0.5, 0.4, 0.6, 0.1, 0.0, 0.2).validate());
  EXPECT_THROW(dca("g", G, 0.7, 0.4, 0.6, 0.1, 0.0, 0.2).validate(), BidError);
  EXPECT_THROW(dca("l", L, -0.5, -0.6, -0.4, -0.1, -0.1, -0.05).validate(), BidError);
  EXPECT_THROW(dca("g", G, 0.5, 0.4, 0.6, 0.1, 0.0, 0.2, 1.5).validate(), BidError);
  EXPECT_THROW(dca("g", G, 0.5, 0.4, 0.6, 0.1, 0.0, 0.2, 1.0, 0.0).validate(), BidError);
  DcaBid empty;
  empty.dca_id = "e";
  EXPECT_THROW(empty.validate(), BidError);
}

TEST(ClearSm, ZeroFlexibilityReturnsBaselines) {
  const std::vector<DcaBid> bids{dca("a", G, 0.3, 0.3, 0.3, 0.1, 0.1, 0.1), dca("b", L, -0.5, -0.5, -0.5, -0.2, -0.2, -0.2)};
  const auto r = clear_ok(bids, setpoint_a(-0.2, -0.1));
  for (std::size_t j = 0; j < 2; ++j) {
    const auto& s = *r.schedules[j].at(Phase::a);
    EXPECT_DOUBLE_EQ(s.p, bids[j].at(Phase::a)->p0);
    EXPECT_DOUBLE_EQ(s.q, bids[j].at(Phase::a)->q0);
    EXPECT_EQ(s.dp, 0.0);
    EXPECT_EQ(s.dq, 0.0);
  }
}

TEST(ClearSm, BalanceForcesGeneratorSetpoint) {
  const std::vector<DcaBid> bids{dca("g", G, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0), dca("l", L, -0.5, -0.5, -0.5, 0.0, 0.0, 0.0)};
  const auto r = clear_ok(bids, setpoint_a(-0.2, 0.0));
  EXPECT_NEAR(r.schedules[0].at(Phase::a)->p, 0.3, 1e-9);
  // later stages may give up ε = 5% of the first stage's radius
  EXPECT_GE(r.schedules[0].at(Phase::a)->dp, 0.95 * 0.3 - 1e-8);
  EXPECT_LE(r.schedules[0].at(Phase::a)->dp, 0.3 + 1e-9);
}

TEST(ClearSm, InfeasibleSetpointNamesBalanceRow) {
  const std::vector<DcaBid> bids{dca("g", G, 0.5, 0.4, 0.6, 0.0, -0.1, 0.1), dca("l", L, -0.5, -0.5, -0.4, 0.0, 0.0, 0.1)};
  const SmClearing c = clear_sm_lexicographic("s", bids, setpoint_a(0.5, 0.0));
  ASSERT_FALSE(c.ok());
  ASSERT_TRUE(c.violation);
  EXPECT_EQ(c.violation->phase, Phase::a);
  EXPECT_EQ(c.violation->commodity, 'P');
  EXPECT_NEAR(c.violation->attainable_min, -0.1, 1e-12);
  EXPECT_NEAR(c.violation->attainable_max, 0.2, 1e-12);
  EXPECT_NE(c.message.find("phase a P balance"), std::string::npos);
}

TEST(ClearSm, SetpointOnRangeEdgeIsPinned) {
  const std::vector<DcaBid> bids{dca("g", G, 0.5, 0.4, 0.6, 0.0, -0.1, 0.1), dca("h", G, 0.2, 0.1, 0.3, 0.0, -0.1, 0.1)};
  const auto r = clear_ok(bids, setpoint_a(0.9, 0.2));
  EXPECT_NEAR(r.schedules[0].at(Phase::a)->p, 0.6, 1e-12);
  EXPECT_NEAR(r.schedules[1].at(Phase::a)->p, 0.3, 1e-12);
  EXPECT_NEAR(r.schedules[0].at(Phase::a)->q, 0.1, 1e-12);
  EXPECT_EQ(r.schedules[0].at(Phase::a)->dp, 0.0);
}

TEST(ClearSm, RejectsPhaseWithoutSetpoint) {
  const std::vector<DcaBid> bids{dca("g", G, 0.5, 0.4, 0.6, 0.0, -0.1, 0.1)};
  PmSetpoint sp;
  sp.at(Phase::b) = PmPhaseSetpoint{0.5, 0.0, 0.05, 0.005};
  EXPECT_THROW(clear_sm_lexicographic("s", bids, sp), std::invalid_argument);
  SmOptions o;
  o.epsilon = -0.1;
  EXPECT_THROW(clear_sm_lexicographic("s", bids, setpoint_a(0.5, 0.0), o), std::invalid_argument);
}

TEST(ClearSm, TrustedDcasGetTheFlexibility) {
  const std::vector<DcaBid> bids{dca("trusted", G, 0.5, 0.3, 0.7, 0.0, 0.0, 0.0, 1.0),
                                 dca("flaky", G, 0.5, 0.3, 0.7, 0.0, 0.0, 0.0, 0.2)};
  const auto r = clear_ok(bids, setpoint_a(1.2, 0.0));
  // stage 1 centres the trusted DCA (radius 0.2) and pushes the other to its edge
  EXPECT_NEAR(r.stages[0].value, -0.2, 1e-7);
  EXPECT_GT(r.schedules[0].at(Phase::a)->dp, r.schedules[1].at(Phase::a)->dp);
  EXPECT_GE(-r.final_f1, 0.95 * 0.2 - 1e-8);
}

TEST(ClearSm, StageOptimaMatchGridSearch) {
  const std::vector<DcaBid> bids{dca("g", G, 0.40, 0.32, 0.48, 0.10, 0.08, 0.12, 0.9, 0.3),
                                 dca("l1", L, -0.50, -0.50, -0.40, -0.10, -0.10, -0.08, 0.6, 0.8),
                                 dca("l2", L, -0.30, -0.30, -0.24, -0.05, -0.05, -0.04, 0.3, 0.5)};
  const double p = -0.30, q = -0.02;
  const auto r = clear_ok(bids, setpoint_a(p, q));
  const auto o = oracle::sm_grid_search(bids, p, q, 0.05, 0.01);
  ASSERT_GT(o.points, 0u);
  EXPECT_NEAR(r.stages[0].value, o.f1, 1e-3);
  EXPECT_NEAR(r.stages[1].value, o.f3, 1e-3);
  EXPECT_NEAR(r.stages[2].value, o.f4, 1e-3);
  expect_invariants(bids, setpoint_a(p, q), r, 0.05);
}

TEST(ClearSm, LaterStagesRecordEarlierObjectives) {
  const std::vector<DcaBid> bids{dca("g", G, 0.40, 0.32, 0.48, 0.10, 0.08, 0.12, 0.9, 0.3),
                                 dca("l", L, -0.50, -0.50, -0.40, -0.10, -0.10, -0.08, 0.6, 0.8)};
  const auto r = clear_ok(bids, setpoint_a(-0.05, 0.01));
  ASSERT_EQ(r.stages.size(), 3u);
  EXPECT_TRUE(r.stages[0].earlier.empty());
  ASSERT_EQ(r.stages[1].earlier.size(), 1u);
  ASSERT_EQ(r.stages[2].earlier.size(), 2u);
  const double f1 = r.stages[0].value, f3 = r.stages[1].value;
  EXPECT_LE(r.stages[1].earlier[0], f1 + 0.05 * std::abs(f1) + 1e-8);
  EXPECT_LE(r.stages[2].earlier[0], f1 + 0.05 * std::abs(f1) + 1e-8);
  EXPECT_LE(r.stages[2].earlier[1], f3 + 0.05 * std::abs(f3) + 1e-8);
  EXPECT_NEAR(r.stages[2].earlier[0], r.final_f1, 1e-12);
}

TEST(ClearSm, RandomInstancesKeepInvariants) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<DcaBid> bids;
    double lo_p = 0, hi_p = 0, lo_q = 0, hi_q = 0;
    const int n = 2 + static_cast<int>(u(rng) * 4);
    for (int j = 0; j < n; ++j) {
      DcaBid b;
      b.dca_id = "d" + std::to_string(j);
      b.p_kind = u(rng) < 0.5 ? G : L;
      b.q_kind = b.p_kind;
      b.commitment = u(rng);
      b.beta_p = 0.1 + 0.9 * u(rng);
      b.beta_q = 0.1 + 0.9 * u(rng);
      for (Phase ph : lem::net3p::kAllPhases) {
        const double sgn = b.p_kind == G ? 1.0 : -1.0;
        const double p0 = sgn * (0.1 + u(rng)), q0 = sgn * 0.3 * u(rng);
        const double fp = 0.1 + 0.2 * u(rng), fq = 0.1 + 0.2 * u(rng);
        DcaPhaseBid pb{p0, q0, p0 - fp * std::abs(p0), p0 + fp * std::abs(p0), q0 - fq * std::abs(q0), q0 + fq * std::abs(q0)};
        if (b.p_kind == L) pb.p_min = p0, pb.q_min = q0;
        b.at(ph) = pb;
      }
      bids.push_back(b);
    }
    PmSetpoint sp;
    for (Phase ph : lem::net3p::kAllPhases) {
      lo_p = hi_p = lo_q = hi_q = 0.0;
      for (const auto& b : bids) {
        lo_p += b.at(ph)->p_min, hi_p += b.at(ph)->p_max;
        lo_q += b.at(ph)->q_min, hi_q += b.at(ph)->q_max;
      }
      sp.at(ph) = PmPhaseSetpoint{lo_p + u(rng) * (hi_p - lo_p), lo_q + u(rng) * (hi_q - lo_q), 0.05, 0.005};
    }
    const auto r = clear_ok(bids, sp);
    expect_invariants(bids, sp, r, 0.05);
    for (const auto& st : r.stages) EXPECT_LT(st.kkt.max_residual(), 1e-6);
  }
}

TEST(ClearSm, LiteralStageOneEnumeratesVertices) {
  const std::vector<DcaBid> bids{dca("g", G, 0.40, 0.30, 0.50, 0.0, 0.0, 0.0, 1.0),
                                 dca("h", G, 0.20, 0.10, 0.30, 0.0, 0.0, 0.0, 0.5)};
  SmOptions o;
  o.stage1 = Stage1Objective::literal_enumeration;
  const auto r = clear_ok(bids, setpoint_a(0.6, 0.0), o);
  // vertices: (0.3, 0.3) → 0.01 + 0.5·0.01 = 0.015; (0.5, 0.1) → 0.01 + 0.005 = 0.015
  EXPECT_NEAR(r.stages[0].value, -0.015, 1e-12);
  EXPECT_LE(r.final_f1, r.stages[0].value + 0.05 * 0.015 + 1e-8);
  expect_invariants(bids, setpoint_a(0.6, 0.0), r, 0.05);
}

TEST(ClearSm, Deterministic) {
  const std::vector<DcaBid> bids{dca("g", G, 0.40, 0.32, 0.48, 0.10, 0.08, 0.12, 0.9, 0.3),
                                 dca("l", L, -0.50, -0.50, -0.40, -0.10, -0.10, -0.08, 0.6, 0.8)};
  const auto a = clear_ok(bids, setpoint_a(-0.05, 0.01));
  const auto b = clear_ok(bids, setpoint_a(-0.05, 0.01));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(a.schedules[j].at(Phase::a)->p, b.schedules[j].at(Phase::a)->p);
    EXPECT_EQ(a.schedules[j].at(Phase::a)->dp, b.schedules[j].at(Phase::a)->dp);
  }
}

TEST(CommoditySets, ClassifiesBySignOfNetInjection) {
  SmClearingResult r;
  r.schedules = {schedule(0.2, -0.1), schedule(0.0, 0.0), schedule(-0.3, 0.4)};
  const auto s = classify_commodity_sets(r);
  EXPECT_EQ(s.gen_p, (std::vector<std::size_t>{0}));
  EXPECT_EQ(s.load_p, (std::vector<std::size_t>{2}));
  EXPECT_EQ(s.gen_q, (std::vector<std::size_t>{2}));
  EXPECT_EQ(s.load_q, (std::vector<std::size_t>{0}));

  SmClearingResult loads;
  loads.schedules = {schedule(-0.2, -0.1), schedule(-0.1, -0.1)};
  EXPECT_TRUE(classify_commodity_sets(loads).gen_p.empty());
}

TEST(CommoditySets, SumsOverPhases) {
  SmClearingResult r;
  DcaSchedule s;
  s.phases[0] = DcaPhaseSchedule{0.3, 0.0, 0, 0};
  s.phases[2] = DcaPhaseSchedule{-0.5, 0.0, 0, 0};
  r.schedules = {s};
  EXPECT_EQ(classify_commodity_sets(r).load_p.size(), 1u);
}

TEST(PriceMultipliers, CaseTable) {
  CommoditySets s;
  s.gen_p = {0, 1};
  s.load_p = {2, 3, 4};
  auto y = compute_price_multipliers(s, 5);
  EXPECT_DOUBLE_EQ(y[0].y_p, 1.0);
  EXPECT_DOUBLE_EQ(y[2].y_p, 5.0 / 6.0);

  CommoditySets loads_only;
  loads_only.load_p = {0, 1};
  y = compute_price_multipliers(loads_only, 2);
  EXPECT_DOUBLE_EQ(y[0].y_p, 0.25);

  CommoditySets gens_only;
  gens_only.gen_p = {0, 1};
  y = compute_price_multipliers(gens_only, 2);
  EXPECT_DOUBLE_EQ(y[1].y_p, 0.25);
  EXPECT_DOUBLE_EQ(y[1].y_q, 0.0);
}

TEST(Tariffs, ArithmeticSubstitution) {
  SmClearingResult r;
  r.schedules = {schedule(10.0, 0.0), schedule(-5.0, 0.0)};
  const auto sets = classify_commodity_sets(r);
  PmSetpoint sp;
  sp.at(Phase::a) = PmPhaseSetpoint{5.0, 0.0, 1.0, 0.0};
  const auto t = compute_retail_tariffs(r, sets, sp, {1.0 / 60.0, 1.0, 1.0});
  EXPECT_DOUBLE_EQ(t.r_pm, 5.0);
  EXPECT_NEAR(t.tariffs[0].mu_p, 30.0, 1e-12);
  EXPECT_EQ(t.tariffs[0].mu_q, 0.0);
  EXPECT_EQ(t.tariffs[0].cash_q, 0.0);
}

TEST(Tariffs, ZeroInjectionGetsZeroTariff) {
  SmClearingResult r;
  r.schedules = {schedule(0.0, 0.1), schedule(-0.2, -0.1)};
  const auto t = compute_retail_tariffs(r, classify_commodity_sets(r), setpoint_a(-0.2, 0.0, 0.05, 0.005),
                                        {1.0 / 60.0, 5.0 / 60.0, 1000.0});
  EXPECT_EQ(t.tariffs[0].mu_p, 0.0);
  EXPECT_EQ(t.tariffs[0].cash_p, 0.0);
}

TEST(Tariffs, BudgetBalancesWhenAllSetsPopulated) {
  SmClearingResult r;
  r.schedules = {schedule(0.2, 0.05), schedule(0.1, 0.02), schedule(-0.3, -0.04), schedule(-0.1, -0.02),
                 schedule(-0.2, -0.03)};
  const auto sets = classify_commodity_sets(r);
  const auto t = compute_retail_tariffs(r, sets, setpoint_a(-0.3, -0.02, 0.06, 0.01), {1.0 / 60.0, 5.0 / 60.0, 1000.0});
  // loads pay (1 + 2|S_G|)|R|/2, generators receive |S_G||R|, per commodity
  EXPECT_NEAR(t.net_cash_flow, std::abs(t.r_pm), 1e-9 * std::abs(t.r_pm));
  double loads = 0.0;
  for (std::size_t j : sets.load_p) loads += t.tariffs[j].cash_p;
  EXPECT_NEAR(loads, 2.5 * std::abs(t.r_pm), 1e-12);
}

TEST(Tariffs, RejectsNonPositiveUnits) {
  SmClearingResult r;
  EXPECT_THROW(compute_retail_tariffs(r, {}, {}, {0.0, 1.0, 1.0}), std::invalid_argument);
}

TEST(Aggregate, SumsSchedulesAndRadii) {
  SmClearingResult r;
  DcaSchedule a, b;
  a.phases[0] = DcaPhaseSchedule{0.3, 0.0, 0.1, 0.0};
  b.phases[0] = DcaPhaseSchedule{-0.5, 0.0, 0.0, 0.0};
  r.schedules = {a, b};
  const std::vector<DcaBid> bids{dca("a", G, 0.3, 0.2, 0.4, 0, 0, 0), dca("b", L, -0.5, -0.5, -0.5, 0, 0, 0)};
  const auto bid = aggregate_smo_bid("s", std::span(&r, 1), bids, {"n1", 0.04, 0.004});
  const auto& pb = *bid.at(Phase::a);
  EXPECT_NEAR(pb.p0, -0.2, 1e-15);
  EXPECT_NEAR(pb.p_min, -0.3, 1e-15);
  EXPECT_NEAR(pb.p_max, -0.1, 1e-15);
  EXPECT_EQ(bid.bus_id, "n1");
}

TEST(Aggregate, SingleDcaZeroRadiusIsDegenerate) {
  SmClearingResult r;
  r.schedules = {schedule(0.4, 0.1)};
  const std::vector<DcaBid> bids{dca("a", G, 0.4, 0.4, 0.4, 0.1, 0.1, 0.1)};
  const auto pb = *aggregate_smo_bid("s", std::span(&r, 1), bids, {}).at(Phase::a);
  EXPECT_EQ(pb.p_min, pb.p0);
  EXPECT_EQ(pb.p_max, pb.p0);
}

TEST(Aggregate, RandomWidthsEqualTwiceRadiusSum) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SmClearingResult r;
  std::vector<DcaBid> bids;
  double sum_dp = 0.0, sum_p = 0.0;
  for (int j = 0; j < 5; ++j) {
    const double p = u(rng), dp = 0.1 * std::abs(u(rng));
    DcaSchedule s;
    s.phases[0] = DcaPhaseSchedule{p, 0.0, dp, 0.0};
    r.schedules.push_back(s);
    bids.push_back(dca("d" + std::to_string(j), G, p, p - dp, p + dp, 0, 0, 0));
    sum_dp += dp;
    sum_p += p;
  }
  const auto pb = *aggregate_smo_bid("s", std::span(&r, 1), bids, {}).at(Phase::a);
  EXPECT_NEAR(pb.p_max - pb.p_min, 2.0 * sum_dp, 1e-12);
  EXPECT_NEAR(pb.p0, sum_p, 1e-12);
}

TEST(Aggregate, EmptyWindowRejected) {
  EXPECT_THROW(aggregate_smo_bid("s", {}, {}, {}), std::invalid_argument);
}

TEST(Bootstrap, MinkowskiSumOfRanges) {
  const std::vector<DcaBid> bids{dca("a", G, 0.3, 0.2, 0.4, 0.0, -0.1, 0.1), dca("b", L, -0.5, -0.5, -0.4, -0.1, -0.1, -0.05)};
  const auto pb = *bootstrap_smo_bid("s", bids, {}).at(Phase::a);
  EXPECT_NEAR(pb.p_min, -0.3, 1e-15);
  EXPECT_NEAR(pb.p_max, 0.0, 1e-15);
  EXPECT_NEAR(pb.q_min, -0.2, 1e-15);
  EXPECT_NEAR(pb.q_max, 0.05, 1e-15);
}
