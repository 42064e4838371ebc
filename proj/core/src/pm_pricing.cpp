#include "lem/pm.hpp"

#include <algorithm>
#include <cmath>

namespace lem::pm {

Dlmp extract_dlmp(const net3p::ThreePhaseNetwork& net, const CiOpfSolution& sol, const net3p::AdmittanceMatrix& y) {
  const auto n = static_cast<Eigen::Index>(sol.np.size());
  if (y.rows() != n || y.cols() != n) throw std::invalid_argument("admittance does not match the solution");
  const Eigen::VectorXcd lv = y.adjoint() * sol.lambda_i;

  Dlmp d;
  d.np.resize(sol.np.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    auto& p = d.np[static_cast<std::size_t>(k)];
    p.lambda_p = sol.lambda_p[k];
    p.lambda_q = sol.lambda_q[k];
    p.lambda_v_complex = lv[k];
    p.lambda_v = lv[k].real();
  }
  d.node.resize(net.buses().size());
  std::vector<int> count(net.buses().size(), 0);
  for (std::size_t k = 0; k < d.np.size(); ++k) {
    const std::size_t bus = net.node_phases()[k].bus;
    d.node[bus].lambda_p += d.np[k].lambda_p;
    d.node[bus].lambda_q += d.np[k].lambda_q;
    d.node[bus].lambda_v += d.np[k].lambda_v;
    ++count[bus];
  }
  for (std::size_t i = 0; i < d.node.size(); ++i) {
    d.node[i].bus_id = net.buses()[i].id;
    if (count[i] == 0) continue;
    d.node[i].lambda_p /= count[i];
    d.node[i].lambda_q /= count[i];
    d.node[i].lambda_v /= count[i];
  }
  return d;
}

GapReport relaxation_gap(const net3p::ThreePhaseNetwork& net, const CiOpfSolution& sol, const BoundsOptions& limits) {
  GapReport g;
  g.per_node_phase.resize(sol.np.size());
  for (std::size_t k = 0; k < sol.np.size(); ++k) {
    const NodePhaseState& s = sol.np[k];
    const double gp = std::abs(s.p - (s.vr * s.ir + s.vi * s.ii));
    const double gq = std::abs(s.q - (s.vi * s.ir - s.vr * s.ii));
    g.max_p = std::max(g.max_p, gp);
    g.max_q = std::max(g.max_q, gq);
    g.per_node_phase[k] = std::max(gp, gq);
    if (net.is_slack(net.node_phases()[k].bus)) continue;
    const double mag = std::abs(s.v());
    g.ring = std::max({g.ring, limits.v_min - mag, mag - limits.v_max});
  }
  const auto& bps = net.branch_phases();
  for (std::size_t r = 0; r < bps.size(); ++r) {
    const net3p::Branch& br = net.branches()[bps[r].branch];
    const auto ph = br.phases.phases();
    const auto pos = std::find(ph.begin(), ph.end(), bps[r].phase) - ph.begin();
    const double over = std::abs(sol.branch_current[static_cast<Eigen::Index>(r)]) - br.i_max[pos];
    g.ampacity = std::max(g.ampacity, over);
  }
  return g;
}

std::optional<double> equivalent_rate(double lambda_p, double lambda_q, double lambda_v, double p, double q,
                                      Complex v, Complex v_nominal) {
  if (std::abs(p) <= kZeroInjection) return std::nullopt;
  const Complex rel = v / v_nominal;
  const double dv = std::abs(rel.real() - 1.0) + std::abs(rel.imag());
  return (lambda_p * p + lambda_q * q + lambda_v * dv) / p;
}

EquivalentRates equivalent_rates(const net3p::ThreePhaseNetwork& net, const Dlmp& dlmp, const CiOpfSolution& sol) {
  EquivalentRates out;
  out.node_phase.resize(sol.np.size());
  std::vector<double> num(net.buses().size(), 0.0), den(net.buses().size(), 0.0);
  for (std::size_t k = 0; k < sol.np.size(); ++k) {
    const NodePhaseState& s = sol.np[k];
    const NodePhasePrice& pr = dlmp.np[k];
    const Complex vn = net.nominal_voltage(k);
    out.node_phase[k] = equivalent_rate(pr.lambda_p, pr.lambda_q, pr.lambda_v, s.p, s.q, s.v(), vn);
    const Complex rel = s.v() / vn;
    const std::size_t bus = net.node_phases()[k].bus;
    num[bus] += pr.lambda_p * s.p + pr.lambda_q * s.q + pr.lambda_v * (std::abs(rel.real() - 1.0) + std::abs(rel.imag()));
    den[bus] += s.p;
  }
  out.node.resize(net.buses().size());
  for (std::size_t i = 0; i < num.size(); ++i)
    if (std::abs(den[i]) > kZeroInjection) out.node[i] = num[i] / den[i];
  return out;
}

}  // namespace lem::pm
