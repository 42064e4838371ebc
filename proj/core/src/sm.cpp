#include "lem/sm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace lem::sm {
namespace {

using convex::ConvexProgram;
using convex::LinearExpr;

constexpr double kBidTol = 1e-12;

// Variables of one DCA-phase: P, Q, δP, δQ.
struct Slot {
  int p = -1;
  int q = -1;
  int dp = -1;
  int dq = -1;
};

struct Group {
  Phase phase;
  char commodity;
  double target = 0.0;
  std::vector<std::size_t> members;  // bid indices
  double lo = 0.0;
  double hi = 0.0;
  bool pinned = false;
  double frac = 0.0;  // pinned position inside each member's range

  double pinned_value(double l, double h) const { return l + frac * (h - l); }
};

double lo_of(const DcaPhaseBid& b, char c) { return c == 'P' ? b.p_min : b.q_min; }
double hi_of(const DcaPhaseBid& b, char c) { return c == 'P' ? b.p_max : b.q_max; }
double base_of(const DcaPhaseBid& b, char c) { return c == 'P' ? b.p0 : b.q0; }

struct Model {
  std::span<const DcaBid> bids;
  std::vector<std::array<Slot, 3>> slots;
  std::vector<Group> groups;
  int nvar = 0;

  int value_var(std::size_t j, Phase ph, char c) const {
    const Slot& s = slots[j][static_cast<std::size_t>(net3p::index(ph))];
    return c == 'P' ? s.p : s.q;
  }
  int radius_var(std::size_t j, Phase ph, char c) const {
    const Slot& s = slots[j][static_cast<std::size_t>(net3p::index(ph))];
    return c == 'P' ? s.dp : s.dq;
  }
};

const Group* group_of(const Model& m, Phase ph, char c) {
  for (const Group& g : m.groups)
    if (g.phase == ph && g.commodity == c) return &g;
  return nullptr;
}

// Σ C δ (surrogate f1, negated) or Σ δ (f3, negated) over non-degenerate radii.
LinearExpr radius_objective(const Model& m, ConvexProgram& prog, bool weighted) {
  LinearExpr e;
  for (std::size_t j = 0; j < m.bids.size(); ++j) {
    const double w = weighted ? m.bids[j].commitment : 1.0;
    if (w == 0.0) continue;
    for (Phase ph : net3p::kAllPhases) {
      if (!m.bids[j].at(ph)) continue;
      for (char c : {'P', 'Q'}) {
        const int v = m.radius_var(j, ph, c);
        if (prog.variables()[static_cast<std::size_t>(v)].upper > 0.0) e.push_back({v, -w});
      }
    }
  }
  return e;
}

double eval_linear(const LinearExpr& e, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (const auto& t : e) s += t.coef * x[t.var];
  return s;
}

double eval_disutility(const Model& m, const Eigen::VectorXd& x) {
  double f = 0.0;
  for (std::size_t j = 0; j < m.bids.size(); ++j)
    for (Phase ph : net3p::kAllPhases) {
      const auto& b = m.bids[j].at(ph);
      if (!b) continue;
      const double dp = x[m.value_var(j, ph, 'P')] - b->p0;
      const double dq = x[m.value_var(j, ph, 'Q')] - b->q0;
      f += m.bids[j].beta_p * dp * dp + m.bids[j].beta_q * dq * dq;
    }
  return f;
}

double eval_literal_f1(const Model& m, const Eigen::VectorXd& x) {
  double f = 0.0;
  for (std::size_t j = 0; j < m.bids.size(); ++j)
    for (Phase ph : net3p::kAllPhases) {
      const auto& b = m.bids[j].at(ph);
      if (!b) continue;
      const double dp = x[m.value_var(j, ph, 'P')] - b->p0;
      const double dq = x[m.value_var(j, ph, 'Q')] - b->q0;
      f -= m.bids[j].commitment * (dp * dp + dq * dq);
    }
  return f;
}

ConvexProgram base_program(const Model& m, double tie_break) {
  ConvexProgram prog;
  prog.options.feasibility_tol = 1e-8;
  prog.options.optimality_tol = 1e-8;
  prog.options.gap_tol = 1e-8;
  for (std::size_t j = 0; j < m.bids.size(); ++j) {
    const DcaBid& bid = m.bids[j];
    for (Phase ph : net3p::kAllPhases) {
      const auto& b = bid.at(ph);
      if (!b) continue;
      for (char c : {'P', 'Q'}) {
        const std::string stem = bid.dca_id + "." + net3p::to_char(ph) + "." + c;
        double lo = lo_of(*b, c);
        double hi = hi_of(*b, c);
        double rmax = 0.5 * (hi - lo);
        const Group* g = group_of(m, ph, c);
        if (g->pinned) lo = hi = g->pinned_value(lo, hi), rmax = 0.0;
        const int v = prog.add_variable(stem, lo, hi);
        const int r = prog.add_variable("d" + stem, 0.0, rmax);
        if (rmax > 0.0) {
          prog.add_inequality({{v, -1.0}, {r, 1.0}}, -lo_of(*b, c), "range_lo");
          prog.add_inequality({{v, 1.0}, {r, 1.0}}, hi_of(*b, c), "range_hi");
        }
        if (tie_break > 0.0 && hi > lo) {
          prog.add_quadratic(v, v, tie_break);
          prog.add_linear(v, -2.0 * tie_break * base_of(*b, c));
          prog.add_constant(tie_break * base_of(*b, c) * base_of(*b, c));
        }
      }
    }
  }
  for (const Group& g : m.groups) {
    if (g.pinned) continue;
    LinearExpr row;
    for (std::size_t j : g.members) row.push_back({m.value_var(j, g.phase, g.commodity), 1.0});
    prog.add_equality(std::move(row), g.target, std::string("balance_") + g.commodity);
  }
  return prog;
}

void add_quadratic_objective(const Model& m, ConvexProgram& prog) {
  for (std::size_t j = 0; j < m.bids.size(); ++j)
    for (Phase ph : net3p::kAllPhases) {
      const auto& b = m.bids[j].at(ph);
      if (!b) continue;
      for (char c : {'P', 'Q'}) {
        const double beta = c == 'P' ? m.bids[j].beta_p : m.bids[j].beta_q;
        const int v = m.value_var(j, ph, c);
        const double base = base_of(*b, c);
        prog.add_quadratic(v, v, beta);
        prog.add_linear(v, -2.0 * beta * base);
        prog.add_constant(beta * base * base);
      }
    }
}

// Maximizes Σ C (x − x⁰)² over {lo ≤ x ≤ hi, Σx = target}. The maximum of a
// convex function sits at a vertex: every coordinate at a bound except one.
struct Enumerated {
  double value = -1.0;
  std::vector<double> x;
};

Enumerated enumerate_group(const std::vector<double>& lo, const std::vector<double>& hi,
                           const std::vector<double>& base, const std::vector<double>& w, double target) {
  const std::size_t n = lo.size();
  if (n > 12) throw std::invalid_argument("literal f1 enumeration limited to 12 DCAs per phase");
  Enumerated best;
  std::vector<double> x(n);
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t combos = std::size_t{1} << (n - 1);
    for (std::size_t mask = 0; mask < combos; ++mask) {
      double rest = 0.0;
      std::size_t bit = 0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == f) continue;
        x[k] = (mask >> bit++) & 1u ? hi[k] : lo[k];
        rest += x[k];
      }
      x[f] = target - rest;
      if (x[f] < lo[f] - 1e-9 || x[f] > hi[f] + 1e-9) continue;
      x[f] = std::clamp(x[f], lo[f], hi[f]);
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += w[k] * (x[k] - base[k]) * (x[k] - base[k]);
      if (v > best.value) best = {v, x};
    }
  }
  return best;
}

}  // namespace

void DcaBid::validate() const {
  auto fail = [&](const std::string& what) { throw BidError("DCA " + dca_id + ": " + what); };
  if (!(commitment >= 0.0 && commitment <= 1.0)) fail("commitment outside [0, 1]");
  if (!(beta_p > 0.0 && beta_q > 0.0)) fail("disutility coefficients must be positive");
  bool any = false;
  for (Phase ph : net3p::kAllPhases) {
    const auto& b = at(ph);
    if (!b) continue;
    any = true;
    const std::string where = std::string(" on phase ") + net3p::to_char(ph);
    if (!(b->p_min <= b->p0 + kBidTol && b->p0 <= b->p_max + kBidTol)) fail("P baseline outside range" + where);
    if (!(b->q_min <= b->q0 + kBidTol && b->q0 <= b->q_max + kBidTol)) fail("Q baseline outside range" + where);
    if (p_kind == CommodityKind::load && std::abs(b->p_min - b->p0) > kBidTol)
      fail("load may only offer downward P flexibility" + where);
    if (q_kind == CommodityKind::load && std::abs(b->q_min - b->q0) > kBidTol)
      fail("load may only offer downward Q flexibility" + where);
  }
  if (!any) fail("no phases");
}

double DcaSchedule::net_p() const {
  double s = 0.0;
  for (const auto& p : phases)
    if (p) s += p->p;
  return s;
}

double DcaSchedule::net_q() const {
  double s = 0.0;
  for (const auto& p : phases)
    if (p) s += p->q;
  return s;
}

std::string BalanceViolation::describe() const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "phase %c %c balance: setpoint %.9g outside attainable [%.9g, %.9g]",
                net3p::to_char(phase), commodity, required, attainable_min, attainable_max);
  return buf;
}

SmClearing clear_sm_lexicographic(const std::string& smo_id, std::span<const DcaBid> bids,
                                  const PmSetpoint& setpoint, const SmOptions& options) {
  if (options.epsilon < 0.0) throw std::invalid_argument("epsilon must be non-negative");
  for (const DcaBid& b : bids) b.validate();

  Model m;
  m.bids = bids;
  m.slots.resize(bids.size());

  for (Phase ph : net3p::kAllPhases) {
    const auto& sp = setpoint.at(ph);
    for (char c : {'P', 'Q'}) {
      Group g;
      g.phase = ph;
      g.commodity = c;
      for (std::size_t j = 0; j < bids.size(); ++j) {
        const auto& b = bids[j].at(ph);
        if (!b) continue;
        if (!sp)
          throw std::invalid_argument("DCA " + bids[j].dca_id + " bids on phase " + net3p::to_char(ph) +
                                      " which has no PM setpoint");
        g.members.push_back(j);
        g.lo += lo_of(*b, c);
        g.hi += hi_of(*b, c);
      }
      if (!sp) continue;
      g.target = c == 'P' ? sp->p : sp->q;
      const double tol = options.balance_tol;
      if (g.target < g.lo - tol || g.target > g.hi + tol) {
        SmClearing out;
        out.violation = BalanceViolation{ph, c, g.target, g.lo, g.hi};
        out.message = "SMO " + smo_id + ": " + out.violation->describe();
        return out;
      }
      // A setpoint at (or numerically next to) the edge of the attainable
      // range leaves no interior; split it proportionally instead.
      const double edge = options.pin_tol * std::max(1.0, g.hi - g.lo);
      if (g.target - g.lo <= edge || g.hi - g.target <= edge) {
        g.pinned = true;
        g.frac = g.hi > g.lo ? std::clamp((g.target - g.lo) / (g.hi - g.lo), 0.0, 1.0) : 0.0;
      }
      m.groups.push_back(std::move(g));
    }
  }

  // Variable layout must match base_program's creation order.
  int next = 0;
  for (std::size_t j = 0; j < bids.size(); ++j)
    for (Phase ph : net3p::kAllPhases) {
      if (!bids[j].at(ph)) continue;
      Slot& s = m.slots[j][static_cast<std::size_t>(net3p::index(ph))];
      s.p = next++;
      s.dp = next++;
      s.q = next++;
      s.dq = next++;
    }
  m.nvar = next;

  SmClearingResult result;
  result.smo_id = smo_id;
  const double eps = options.epsilon;
  const double w = options.tie_break_weight;

  struct Degradation {
    LinearExpr expr;
    double rhs;
  };
  std::vector<Degradation> prior;
  auto bound = [&](double fstar) { return fstar + eps * std::abs(fstar); };

  auto fail = [&](const std::string& stage, const convex::SolveResult& r) {
    SmClearing out;
    out.message = "SMO " + smo_id + ": stage " + stage + " " + convex::to_string(r.status) + " (" + r.message + ")";
    return out;
  };
  auto add_prior = [&](ConvexProgram& prog) {
    for (const auto& d : prior)
      if (!d.expr.empty()) prog.add_inequality(d.expr, d.rhs, "degradation");
  };

  const bool literal = options.stage1 == Stage1Objective::literal_enumeration;
  LinearExpr f1;
  auto eval_f1 = [&](const Eigen::VectorXd& v) { return literal ? eval_literal_f1(m, v) : eval_linear(f1, v); };

  // Stage 1.
  {
    ConvexProgram probe = base_program(m, w);
    if (!literal) {
      ConvexProgram prog = probe;
      f1 = radius_objective(m, prog, true);
      for (const auto& t : f1) prog.add_linear(t.var, t.coef);
      const auto r = convex::solve(prog);
      if (!r.ok()) return fail("f1", r);
      const double fstar = eval_linear(f1, r.x);
      result.stages.push_back({"f1", fstar, {}, r.diagnostics, r.iterations});
      prior.push_back({f1, bound(fstar)});
    } else {
      double gstar = 0.0;
      LinearExpr tangent;
      double tangent_rhs = 0.0;
      for (const Group& g : m.groups) {
        std::vector<double> lo, hi, base, wt;
        for (std::size_t j : g.members) {
          const auto& b = *bids[j].at(g.phase);
          const double l = lo_of(b, g.commodity), h = hi_of(b, g.commodity);
          lo.push_back(g.pinned ? g.pinned_value(l, h) : l);
          hi.push_back(g.pinned ? g.pinned_value(l, h) : h);
          base.push_back(base_of(b, g.commodity));
          wt.push_back(bids[j].commitment);
        }
        const Enumerated e =
            enumerate_group(lo, hi, base, wt, g.pinned ? std::accumulate(lo.begin(), lo.end(), 0.0) : g.target);
        if (e.value < 0.0) {
          SmClearing out;
          out.message = "SMO " + smo_id + ": literal f1 enumeration found no vertex";
          return out;
        }
        gstar += e.value;
        for (std::size_t k = 0; k < g.members.size(); ++k) {
          const double grad = 2.0 * wt[k] * (e.x[k] - base[k]);
          if (grad == 0.0) continue;
          // −g ≤ −(1−ε)G* linearized at the maximizer: −∇gᵀx ≤ −(1−ε)G* + g(x̂) − ∇gᵀx̂
          tangent.push_back({m.value_var(g.members[k], g.phase, g.commodity), -grad});
          tangent_rhs += -grad * e.x[k];
        }
      }
      const double fstar = -gstar;
      result.stages.push_back({"f1", fstar, {}, {}, 0});
      if (!tangent.empty()) prior.push_back({tangent, bound(fstar) + gstar + tangent_rhs});
    }
  }

  // Stage 2 (f3).
  LinearExpr f3;
  {
    ConvexProgram prog = base_program(m, w);
    add_prior(prog);
    f3 = radius_objective(m, prog, false);
    for (const auto& t : f3) prog.add_linear(t.var, t.coef);
    const auto r = convex::solve(prog);
    if (!r.ok()) return fail("f3", r);
    const double fstar = eval_linear(f3, r.x);
    result.stages.push_back({"f3", fstar, {eval_f1(r.x)}, r.diagnostics, r.iterations});
    prior.push_back({f3, bound(fstar)});
  }

  // Stage 3 (f4).
  Eigen::VectorXd x;
  {
    ConvexProgram prog = base_program(m, w);
    add_prior(prog);
    add_quadratic_objective(m, prog);
    const auto r = convex::solve(prog);
    if (!r.ok()) return fail("f4", r);
    x = r.x;
    result.stages.push_back({"f4", eval_disutility(m, x), {eval_f1(x), eval_linear(f3, x)}, r.diagnostics, r.iterations});
  }

  {
    ConvexProgram scratch = base_program(m, 0.0);
    result.final_f1 = literal ? eval_literal_f1(m, x) : eval_linear(radius_objective(m, scratch, true), x);
    result.final_f3 = eval_linear(f3, x);
    result.final_f4 = eval_disutility(m, x);
  }

  // Close the balance rows exactly: clamp into the ranges, then spread the
  // remaining residual over the room each member has in that direction.
  for (const Group& g : m.groups) {
    double sum = 0.0, room = 0.0;
    for (std::size_t j : g.members) {
      const auto& b = *bids[j].at(g.phase);
      double& v = x[m.value_var(j, g.phase, g.commodity)];
      v = std::clamp(v, lo_of(b, g.commodity), hi_of(b, g.commodity));
      sum += v;
    }
    const double r = g.target - sum;
    for (std::size_t j : g.members) {
      const auto& b = *bids[j].at(g.phase);
      const double v = x[m.value_var(j, g.phase, g.commodity)];
      room += r > 0.0 ? hi_of(b, g.commodity) - v : v - lo_of(b, g.commodity);
    }
    if (r == 0.0 || room <= 0.0) continue;
    for (std::size_t j : g.members) {
      const auto& b = *bids[j].at(g.phase);
      double& v = x[m.value_var(j, g.phase, g.commodity)];
      const double own = r > 0.0 ? hi_of(b, g.commodity) - v : v - lo_of(b, g.commodity);
      v += r * std::min(1.0, own / room);
    }
  }

  result.schedules.resize(bids.size());
  for (std::size_t j = 0; j < bids.size(); ++j) {
    DcaSchedule& s = result.schedules[j];
    s.dca_id = bids[j].dca_id;
    for (Phase ph : net3p::kAllPhases) {
      const auto& b = bids[j].at(ph);
      if (!b) continue;
      DcaPhaseSchedule ps;
      ps.p = std::clamp(x[m.value_var(j, ph, 'P')], b->p_min, b->p_max);
      ps.q = std::clamp(x[m.value_var(j, ph, 'Q')], b->q_min, b->q_max);
      ps.dp = std::max(0.0, std::min({x[m.radius_var(j, ph, 'P')], ps.p - b->p_min, b->p_max - ps.p}));
      ps.dq = std::max(0.0, std::min({x[m.radius_var(j, ph, 'Q')], ps.q - b->q_min, b->q_max - ps.q}));
      s.phases[static_cast<std::size_t>(net3p::index(ph))] = ps;
    }
  }

  SmClearing out;
  out.result = std::move(result);
  return out;
}

CommoditySets classify_commodity_sets(const SmClearingResult& result, double zero_tol) {
  CommoditySets s;
  for (std::size_t j = 0; j < result.schedules.size(); ++j) {
    const double p = result.schedules[j].net_p();
    const double q = result.schedules[j].net_q();
    if (p > zero_tol) s.gen_p.push_back(j);
    if (p < -zero_tol) s.load_p.push_back(j);
    if (q > zero_tol) s.gen_q.push_back(j);
    if (q < -zero_tol) s.load_q.push_back(j);
  }
  return s;
}

namespace {

double gen_multiplier(std::size_t ng, std::size_t nl) {
  if (ng == 0) return 0.0;
  if (nl == 0) return 1.0 / (2.0 * static_cast<double>(ng));
  return 1.0;
}

double load_multiplier(std::size_t ng, std::size_t nl) {
  if (nl == 0) return 0.0;
  if (ng == 0) return 1.0 / (2.0 * static_cast<double>(nl));
  return (1.0 + 2.0 * static_cast<double>(ng)) / (2.0 * static_cast<double>(nl));
}

}  // namespace

std::vector<PriceMultiplier> compute_price_multipliers(const CommoditySets& sets, std::size_t dca_count) {
  std::vector<PriceMultiplier> y(dca_count);
  const double gp = gen_multiplier(sets.gen_p.size(), sets.load_p.size());
  const double lp = load_multiplier(sets.gen_p.size(), sets.load_p.size());
  const double gq = gen_multiplier(sets.gen_q.size(), sets.load_q.size());
  const double lq = load_multiplier(sets.gen_q.size(), sets.load_q.size());
  for (std::size_t j : sets.gen_p) y.at(j).y_p = gp;
  for (std::size_t j : sets.load_p) y.at(j).y_p = lp;
  for (std::size_t j : sets.gen_q) y.at(j).y_q = gq;
  for (std::size_t j : sets.load_q) y.at(j).y_q = lq;
  return y;
}

TariffResult compute_retail_tariffs(const SmClearingResult& result, const CommoditySets& sets,
                                    const PmSetpoint& setpoint, const TariffUnits& units) {
  if (!(units.dt_s_h > 0.0 && units.dt_p_h > 0.0 && units.s_base_kw > 0.0))
    throw std::invalid_argument("tariff time steps and base must be positive");
  TariffResult out;
  for (const auto& sp : setpoint.phases)
    if (sp) out.r_pm += (sp->mu_p * sp->p + sp->mu_q * sp->q) * units.s_base_kw * units.dt_p_h;
  const double r = std::abs(out.r_pm);

  const auto y = compute_price_multipliers(sets, result.schedules.size());
  std::vector<int> p_sign(result.schedules.size(), 0), q_sign(result.schedules.size(), 0);
  for (std::size_t j : sets.gen_p) p_sign[j] = -1;
  for (std::size_t j : sets.load_p) p_sign[j] = 1;
  for (std::size_t j : sets.gen_q) q_sign[j] = -1;
  for (std::size_t j : sets.load_q) q_sign[j] = 1;

  for (std::size_t j = 0; j < result.schedules.size(); ++j) {
    const DcaSchedule& s = result.schedules[j];
    DcaTariff t;
    t.dca_id = s.dca_id;
    if (p_sign[j] != 0) {
      t.mu_p = y[j].y_p * r / (std::abs(s.net_p()) * units.s_base_kw * units.dt_s_h);
      t.cash_p = p_sign[j] * y[j].y_p * r;
    }
    if (q_sign[j] != 0) {
      t.mu_q = y[j].y_q * r / (std::abs(s.net_q()) * units.s_base_kw * units.dt_s_h);
      t.cash_q = q_sign[j] * y[j].y_q * r;
    }
    out.net_cash_flow += t.cash_flow();
    out.tariffs.push_back(std::move(t));
  }
  return out;
}

namespace {

SmoBid blank_bid(const std::string& smo_id, std::span<const DcaBid> bids, const SmoBidTerms& terms) {
  SmoBid out;
  out.smo_id = smo_id;
  out.bus_id = terms.bus_id;
  out.alpha_p = terms.alpha_p;
  out.alpha_q = terms.alpha_q;
  if (!bids.empty()) {
    for (const DcaBid& b : bids) {
      out.beta_p += b.beta_p;
      out.beta_q += b.beta_q;
    }
    out.beta_p /= static_cast<double>(bids.size());
    out.beta_q /= static_cast<double>(bids.size());
  }
  for (const DcaBid& b : bids)
    for (Phase ph : net3p::kAllPhases) {
      const auto& pb = b.at(ph);
      if (!pb) continue;
      auto& o = out.at(ph);
      if (!o) o = SmoPhaseBid{};
      o->p_load0 += pb->p0;
      o->q_load0 += pb->q0;
    }
  return out;
}

}  // namespace

SmoBid aggregate_smo_bid(const std::string& smo_id, std::span<const SmClearingResult> window,
                         std::span<const DcaBid> bids, const SmoBidTerms& terms) {
  if (window.empty()) throw std::invalid_argument("no SM clearing to aggregate for SMO " + smo_id);
  const SmClearingResult& last = window.back();
  SmoBid out = blank_bid(smo_id, bids, terms);
  for (const DcaSchedule& s : last.schedules)
    for (Phase ph : net3p::kAllPhases) {
      const auto& ps = s.at(ph);
      if (!ps) continue;
      auto& o = out.at(ph);
      if (!o) o = SmoPhaseBid{};
      o->p0 += ps->p;
      o->q0 += ps->q;
      o->p_min += ps->p - ps->dp;
      o->p_max += ps->p + ps->dp;
      o->q_min += ps->q - ps->dq;
      o->q_max += ps->q + ps->dq;
    }
  return out;
}

SmoBid bootstrap_smo_bid(const std::string& smo_id, std::span<const DcaBid> bids, const SmoBidTerms& terms) {
  SmoBid out = blank_bid(smo_id, bids, terms);
  for (const DcaBid& b : bids)
    for (Phase ph : net3p::kAllPhases) {
      const auto& pb = b.at(ph);
      if (!pb) continue;
      auto& o = *out.at(ph);
      o.p0 += pb->p0;
      o.q0 += pb->q0;
      o.p_min += pb->p_min;
      o.p_max += pb->p_max;
      o.q_min += pb->q_min;
      o.q_max += pb->q_max;
    }
  return out;
}

}  // namespace lem::sm
