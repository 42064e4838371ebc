#include "lem/pm.hpp"

#include <unordered_map>

namespace lem::pm {
namespace {

using convex::kInf;

// Real embedding of the complex map V ↦ M V, acting on [V^R; V^I].
Eigen::MatrixXd real_embedding(const Eigen::MatrixXcd& m) {
  const auto r = m.rows(), c = m.cols();
  Eigen::MatrixXd k(2 * r, 2 * c);
  k << m.real(), -m.imag(), m.imag(), m.real();
  return k;
}

// Σ_branch-phase I_brᴴ R I_br as a quadratic form in [V^R; V^I].
Eigen::MatrixXd loss_form(const net3p::ThreePhaseNetwork& net) {
  const Eigen::MatrixXcd m = net3p::primitive_admittance(net) * net3p::build_incidence(net).cast<Complex>();
  const Eigen::MatrixXd k = real_embedding(m);
  const Eigen::MatrixXd r = net3p::branch_resistance(net);
  const auto nb = r.rows();
  Eigen::MatrixXd rb = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
  rb.topLeftCorner(nb, nb) = r;
  rb.bottomRightCorner(nb, nb) = r;
  Eigen::MatrixXd h = k.transpose() * rb * k;
  return 0.5 * (h + h.transpose());
}

void add_envelope(convex::ConvexProgram& prog, int w, int x, int y, const Box& bx, const Box& by) {
  if (bx.degenerate()) {
    prog.add_equality({{w, 1.0}, {y, -bx.hi}}, 0.0, "mce_eq");
  } else if (by.degenerate()) {
    prog.add_equality({{w, 1.0}, {x, -by.hi}}, 0.0, "mce_eq");
  } else {
    for (const EnvelopeCut& cut : build_mce(bx, by))
      prog.add_inequality({{w, cut.c_w}, {x, cut.c_x}, {y, cut.c_y}}, cut.rhs, "mce");
  }
}

}  // namespace

CiOpfProgram assemble_ciopf(const net3p::ThreePhaseNetwork& net, std::span<const SmoBid> bids,
                            const VarBounds& bounds, const PmWeights& weights) {
  const std::size_t n = net.node_phase_count();
  if (bounds.np.size() != n) throw std::invalid_argument("bounds do not match the network");

  CiOpfProgram cp;
  cp.net = &net;
  cp.bounds = bounds;
  cp.weights = weights;
  cp.bids.resize(net.buses().size());

  std::unordered_map<std::string, const SmoBid*> lookup;
  for (const SmoBid& b : bids) {
    const auto bus = net.find_bus(b.bus_id);
    if (!bus) throw MissingBidError("bid for unknown bus " + b.bus_id);
    if (net.is_slack(*bus)) throw MissingBidError("bid placed at the slack bus " + b.bus_id);
    if (!lookup.emplace(b.bus_id, &b).second) throw MissingBidError("two bids at bus " + b.bus_id);
    for (net3p::Phase p : net3p::kAllPhases)
      if (b.at(p) && !net.buses()[*bus].phases.contains(p))
        throw MissingBidError(std::string("bid on absent phase ") + net3p::to_char(p) + " at bus " + b.bus_id);
  }
  for (std::size_t i = 0; i < net.buses().size(); ++i) {
    const net3p::Bus& bus = net.buses()[i];
    if (net.is_slack(i)) {
      cp.bids[i].bus_id = bus.id;
      continue;
    }
    auto it = lookup.find(bus.id);
    if (it == lookup.end()) throw MissingBidError("no bid at bus " + bus.id);
    for (net3p::Phase p : bus.phases.phases())
      if (!it->second->at(p))
        throw MissingBidError(std::string("no bid on phase ") + net3p::to_char(p) + " at bus " + bus.id);
    cp.bids[i] = *it->second;
  }

  auto& prog = cp.program;
  prog.options.feasibility_tol = prog.options.optimality_tol = prog.options.gap_tol = kPmTolerance;
  cp.vars.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& np = net.node_phases()[k];
    const std::string stem = net.buses()[np.bus].id + "." + net3p::to_char(np.phase);
    const NodePhaseBounds& b = bounds.np[k];
    NodePhaseVars& v = cp.vars[k];
    const bool slack = net.is_slack(np.bus);
    if (slack) {
      v.p = prog.add_variable("P." + stem);
      v.q = prog.add_variable("Q." + stem);
      v.vr = prog.add_variable("VR." + stem);
      v.vi = prog.add_variable("VI." + stem);
    } else {
      const SmoPhaseBid& bid = *cp.bids[np.bus].at(np.phase);
      v.p = prog.add_variable("P." + stem, bid.p_min, bid.p_max);
      v.q = prog.add_variable("Q." + stem, bid.q_min, bid.q_max);
      v.vr = prog.add_variable("VR." + stem, b.vr.lo, b.vr.hi);
      v.vi = prog.add_variable("VI." + stem, b.vi.lo, b.vi.hi);
    }
    v.ir = prog.add_variable("IR." + stem, b.ir.lo, b.ir.hi);
    v.ii = prog.add_variable("II." + stem, b.ii.lo, b.ii.hi);
    v.a = prog.add_variable("a." + stem);
    v.b = prog.add_variable("b." + stem);
    v.c = prog.add_variable("c." + stem);
    v.d = prog.add_variable("d." + stem);
  }

  // Objective.
  for (std::size_t k = 0; k < n; ++k) {
    const auto& np = net.node_phases()[k];
    const NodePhaseVars& v = cp.vars[k];
    if (net.is_slack(np.bus)) {
      prog.add_linear(v.p, weights.lambda_p);
      prog.add_linear(v.q, weights.lambda_q);
    } else {
      const SmoBid& bid = cp.bids[np.bus];
      const SmoPhaseBid& pb = *bid.at(np.phase);
      prog.add_quadratic(v.p, v.p, bid.beta_p);
      prog.add_linear(v.p, -2.0 * bid.beta_p * pb.p_load0);
      prog.add_constant(bid.beta_p * pb.p_load0 * pb.p_load0);
      prog.add_quadratic(v.q, v.q, bid.beta_q);
      prog.add_linear(v.q, -2.0 * bid.beta_q * pb.q_load0);
      prog.add_constant(bid.beta_q * pb.q_load0 * pb.q_load0);
      prog.add_linear(v.p, bid.alpha_p);
      prog.add_linear(v.q, bid.alpha_q);
    }
  }
  if (weights.xi != 0.0) {
    std::vector<int> xv(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
      xv[k] = cp.vars[k].vr;
      xv[n + k] = cp.vars[k].vi;
    }
    const Eigen::MatrixXd h = loss_form(net);
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index j = 0; j < h.cols(); ++j)
        if (h(i, j) != 0.0) prog.add_quadratic(xv[static_cast<std::size_t>(i)], xv[static_cast<std::size_t>(j)], weights.xi * h(i, j));
    for (std::size_t k = 0; k < n; ++k) {
      const Complex vt = net.nominal_voltage(k);
      const NodePhaseVars& v = cp.vars[k];
      prog.add_quadratic(v.vr, v.vr, weights.xi);
      prog.add_linear(v.vr, -2.0 * weights.xi * vt.real());
      prog.add_quadratic(v.vi, v.vi, weights.xi);
      prog.add_linear(v.vi, -2.0 * weights.xi * vt.imag());
      prog.add_constant(weights.xi * std::norm(vt));
    }
  }

  // Ohm's law I − YV = 0.
  const net3p::AdmittanceMatrix y = net3p::build_admittance(net);
  cp.ohm_r_row.resize(n);
  cp.ohm_i_row.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    convex::LinearExpr re{{cp.vars[k].ir, 1.0}}, im{{cp.vars[k].ii, 1.0}};
    for (std::size_t m = 0; m < n; ++m) {
      const Complex ykm = y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
      if (ykm == Complex{}) continue;
      re.push_back({cp.vars[m].vr, -ykm.real()});
      re.push_back({cp.vars[m].vi, ykm.imag()});
      im.push_back({cp.vars[m].vr, -ykm.imag()});
      im.push_back({cp.vars[m].vi, -ykm.real()});
    }
    cp.ohm_r_row[k] = prog.add_equality(std::move(re), 0.0, "ohm_r");
    cp.ohm_i_row[k] = prog.add_equality(std::move(im), 0.0, "ohm_i");
  }

  // Power definitions and envelopes.
  cp.p_row.resize(n);
  cp.q_row.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const NodePhaseVars& v = cp.vars[k];
    const NodePhaseBounds& b = bounds.np[k];
    cp.p_row[k] = prog.add_equality({{v.a, 1.0}, {v.b, 1.0}, {v.p, -1.0}}, 0.0, "p_def");
    cp.q_row[k] = prog.add_equality({{v.c, -1.0}, {v.d, 1.0}, {v.q, -1.0}}, 0.0, "q_def");
    add_envelope(prog, v.a, v.vr, v.ir, b.vr, b.ir);
    add_envelope(prog, v.b, v.vi, v.ii, b.vi, b.ii);
    add_envelope(prog, v.c, v.vr, v.ii, b.vr, b.ii);
    add_envelope(prog, v.d, v.vi, v.ir, b.vi, b.ir);
    if (net.is_slack(net.node_phases()[k].bus)) {
      const Complex vn = net.nominal_voltage(k);
      prog.add_equality({{v.vr, 1.0}}, vn.real(), "slack_v");
      prog.add_equality({{v.vi, 1.0}}, vn.imag(), "slack_v");
    }
  }
  return cp;
}

Eigen::VectorXcd CiOpfSolution::v() const {
  Eigen::VectorXcd out(static_cast<Eigen::Index>(np.size()));
  for (std::size_t k = 0; k < np.size(); ++k) out[static_cast<Eigen::Index>(k)] = np[k].v();
  return out;
}

Eigen::VectorXcd CiOpfSolution::i() const {
  Eigen::VectorXcd out(static_cast<Eigen::Index>(np.size()));
  for (std::size_t k = 0; k < np.size(); ++k) out[static_cast<Eigen::Index>(k)] = np[k].i();
  return out;
}

ObjectiveBreakdown evaluate_objective(const CiOpfProgram& cp, std::span<const NodePhaseState> state) {
  const auto& net = *cp.net;
  ObjectiveBreakdown t;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(state.size()));
  for (std::size_t k = 0; k < state.size(); ++k) {
    const auto& np = net.node_phases()[k];
    const NodePhaseState& s = state[k];
    v[static_cast<Eigen::Index>(k)] = s.v();
    t.voltage += std::norm(s.v() - net.nominal_voltage(k));
    if (net.is_slack(np.bus)) {
      t.generation_cost += cp.weights.lambda_p * s.p + cp.weights.lambda_q * s.q;
    } else {
      const SmoBid& bid = cp.bids[np.bus];
      const SmoPhaseBid& pb = *bid.at(np.phase);
      t.disutility += bid.beta_p * (s.p - pb.p_load0) * (s.p - pb.p_load0) +
                      bid.beta_q * (s.q - pb.q_load0) * (s.q - pb.q_load0);
      t.generation_cost += bid.alpha_p * s.p + bid.alpha_q * s.q;
    }
  }
  const Eigen::VectorXcd ibr = net3p::branch_currents(net, v);
  const Eigen::MatrixXd r = net3p::branch_resistance(net);
  t.losses = ibr.real().dot(r * ibr.real()) + ibr.imag().dot(r * ibr.imag());
  return t;
}

PmClearing solve_pm(const CiOpfProgram& cp) {
  PmClearing out;
  out.bounds = cp.bounds;
  auto r = convex::solve(cp.program);
  if (r.status == convex::SolveStatus::numerical_failure) {
    convex::ConvexProgram relaxed = cp.program;
    relaxed.options = convex::SolveOptions{};
    r = convex::solve(relaxed);
  }
  out.status = r.status;
  if (!r.ok()) {
    out.message = std::string("primary market ") + convex::to_string(r.status) + ": " + r.message;
    return out;
  }
  const std::size_t n = cp.vars.size();
  CiOpfSolution sol;
  sol.np.resize(n);
  sol.lambda_p.resize(static_cast<Eigen::Index>(n));
  sol.lambda_q.resize(static_cast<Eigen::Index>(n));
  sol.lambda_i.resize(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const NodePhaseVars& v = cp.vars[k];
    NodePhaseState& s = sol.np[k];
    s.p = r.x[v.p];
    s.q = r.x[v.q];
    s.vr = r.x[v.vr];
    s.vi = r.x[v.vi];
    s.ir = r.x[v.ir];
    s.ii = r.x[v.ii];
    s.a = r.x[v.a];
    s.b = r.x[v.b];
    s.c = r.x[v.c];
    s.d = r.x[v.d];
    const auto e = static_cast<Eigen::Index>(k);
    sol.lambda_p[e] = r.eq_duals[cp.p_row[k]];
    sol.lambda_q[e] = r.eq_duals[cp.q_row[k]];
    sol.lambda_i[e] = {r.eq_duals[cp.ohm_r_row[k]], r.eq_duals[cp.ohm_i_row[k]]};
  }
  sol.branch_current = net3p::branch_currents(*cp.net, sol.v());
  sol.terms = evaluate_objective(cp, sol.np);
  sol.objective = r.objective;
  sol.kkt = r.diagnostics;
  sol.iterations = r.iterations;
  out.solution = std::move(sol);
  return out;
}

}  // namespace lem::pm
