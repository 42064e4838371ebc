#pragma once

#include "lem/bids.hpp"
#include "lem/cosim.hpp"
#include "lem/net3p.hpp"
#include "lem/pm.hpp"
#include "lem/scenario.hpp"
#include "lem/sm.hpp"

#include <random>
#include <string>
#include <vector>

namespace fixtures {

using lem::net3p::Branch;
using lem::net3p::Bus;
using lem::net3p::BusKind;
using lem::net3p::Complex;
using lem::net3p::Phase;
using lem::net3p::PhaseSet;
using lem::net3p::ThreePhaseNetwork;

inline Branch scalar_branch(std::string id, std::string from, std::string to, Complex z, double i_max = 5.0,
                            PhaseSet phases = PhaseSet::single(Phase::a)) {
  const auto n = phases.size();
  Branch br{std::move(id), std::move(from), std::move(to), phases, Eigen::MatrixXcd::Zero(n, n),
            Eigen::VectorXd::Constant(n, i_max)};
  for (int k = 0; k < n; ++k) br.z(k, k) = z;
  return br;
}

inline Bus bus(std::string id, BusKind kind = BusKind::pq, PhaseSet phases = PhaseSet::single(Phase::a)) {
  Bus b;
  b.id = std::move(id);
  b.kind = kind;
  b.phases = phases;
  return b;
}

/// Slack "0", load bus "1", phase a only.
inline ThreePhaseNetwork two_bus(Complex z = {0.01, 0.02}, double i_max = 5.0) {
  return ThreePhaseNetwork({bus("0", BusKind::slack), bus("1")}, {scalar_branch("l01", "0", "1", z, i_max)});
}

inline ThreePhaseNetwork triangle(Complex z = {0.02, 0.04}) {
  return ThreePhaseNetwork({bus("0", BusKind::slack), bus("1"), bus("2")},
                           {scalar_branch("l01", "0", "1", z), scalar_branch("l12", "1", "2", z),
                            scalar_branch("l20", "2", "0", z)});
}

inline ThreePhaseNetwork chain3() {
  return ThreePhaseNetwork({bus("0", BusKind::slack), bus("1"), bus("2")},
                           {scalar_branch("l01", "0", "1", {0.01, 0.02}), scalar_branch("l12", "1", "2", {0.02, 0.03})});
}

/// Three-phase feeder: sub - b1 - {b2, b3}, coupled impedances.
inline ThreePhaseNetwork four_bus_3ph(double scale = 1.0) {
  const PhaseSet abc = PhaseSet::all();
  Eigen::MatrixXcd z(3, 3);
  z << Complex(0.010, 0.025), Complex(0.003, 0.010), Complex(0.003, 0.009),  //
      Complex(0.003, 0.010), Complex(0.011, 0.026), Complex(0.003, 0.010),   //
      Complex(0.003, 0.009), Complex(0.003, 0.010), Complex(0.010, 0.025);
  z *= scale;
  auto br = [&](std::string id, std::string f, std::string t, double k) {
    return Branch{std::move(id), std::move(f), std::move(t), abc, z * k, Eigen::VectorXd::Constant(3, 4.0)};
  };
  return ThreePhaseNetwork({bus("sub", BusKind::slack, abc), bus("b1", BusKind::pq, abc),
                            bus("b2", BusKind::pq, abc), bus("b3", BusKind::pq, abc)},
                           {br("l01", "sub", "b1", 1.0), br("l12", "b1", "b2", 1.5), br("l13", "b1", "b3", 2.0)});
}

inline lem::SmoPhaseBid phase_bid(double p0, double q0, double p_lo, double p_hi, double q_lo, double q_hi) {
  lem::SmoPhaseBid b;
  b.p0 = p0;
  b.q0 = q0;
  b.p_min = p_lo;
  b.p_max = p_hi;
  b.q_min = q_lo;
  b.q_max = q_hi;
  b.p_load0 = p0;
  b.q_load0 = q0;
  return b;
}

inline lem::SmoBid smo_bid(const std::string& bus_id, const lem::SmoPhaseBid& pb, PhaseSet phases, double alpha_p = 0.04,
                           double alpha_q = 0.004, double beta = 0.5) {
  lem::SmoBid b;
  b.smo_id = "smo_" + bus_id;
  b.bus_id = bus_id;
  b.alpha_p = alpha_p;
  b.alpha_q = alpha_q;
  b.beta_p = beta;
  b.beta_q = beta;
  for (Phase p : phases.phases()) b.at(p) = pb;
  return b;
}

inline std::vector<lem::SmoBid> bids_for(const ThreePhaseNetwork& net, const lem::SmoPhaseBid& pb) {
  std::vector<lem::SmoBid> out;
  for (std::size_t i = 0; i < net.buses().size(); ++i)
    if (!net.is_slack(i)) out.push_back(smo_bid(net.buses()[i].id, pb, net.buses()[i].phases));
  return out;
}

inline lem::sm::DcaBid dca(std::string id, lem::sm::CommodityKind kind, double p0, double p_lo, double p_hi, double q0,
                           double q_lo, double q_hi, double commitment = 1.0, double beta = 0.5) {
  lem::sm::DcaBid b;
  b.dca_id = std::move(id);
  b.smo_id = "s";
  b.p_kind = kind;
  b.q_kind = kind;
  b.commitment = commitment;
  b.beta_p = beta;
  b.beta_q = beta;
  b.at(Phase::a) = lem::sm::DcaPhaseBid{p0, q0, p_lo, p_hi, q_lo, q_hi};
  return b;
}

inline lem::sm::PmSetpoint setpoint_a(double p, double q, double mu_p = 0.05, double mu_q = 0.005) {
  lem::sm::PmSetpoint s;
  s.at(Phase::a) = lem::sm::PmPhaseSetpoint{p, q, mu_p, mu_q};
  return s;
}

inline std::string data_path(const std::string& name) { return std::string(LEM_TEST_DATA) + "/" + name; }

}  // namespace fixtures
