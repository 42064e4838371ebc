#pragma once

// Primary-market clearing: bound preprocessing, McCormick-relaxed
// current-injection OPF, dLMP extraction and relaxation audits.
//
// Objective units: coefficients are $/kWh applied to p.u. powers, so the
// objective times s_base [kW] is $/h and the P/Q balance duals are $/kWh.

#include "lem/bids.hpp"
#include "lem/convex.hpp"
#include "lem/net3p.hpp"

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lem::pm {

using net3p::Complex;

struct Box {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool degenerate() const { return hi == lo; }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
};

struct NodePhaseBounds {
  Box vr, vi, ir, ii;
};

/// Indexed by node-phase.
struct VarBounds {
  std::vector<NodePhaseBounds> np;
};

struct BoundsOptions {
  double theta_window_deg = 15.0;
  double v_min = 0.95;
  double v_max = 1.05;
};

class BoundsError : public std::invalid_argument {
public:
  BoundsError(const std::string& node, const std::string& what)
      : std::invalid_argument("bounds at " + node + ": " + what), node_(node) {}
  const std::string& node() const { return node_; }

private:
  std::string node_;
};

class MissingBidError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// `bids` must cover every non-slack bus (use zero_bid for junctions).
VarBounds preprocess_bounds(const net3p::ThreePhaseNetwork& net, std::span<const SmoBid> bids,
                            const BoundsOptions& options = {});

/// Boxes of total width `width` centred on (v, i); the slack V box stays degenerate.
VarBounds boxes_around(const net3p::ThreePhaseNetwork& net, const Eigen::VectorXcd& v,
                       const Eigen::VectorXcd& i, double width);

/// c_w·w + c_x·x + c_y·y ≤ rhs
struct EnvelopeCut {
  double c_w = 0.0;
  double c_x = 0.0;
  double c_y = 0.0;
  double rhs = 0.0;

  double violation(double w, double x, double y) const { return c_w * w + c_x * x + c_y * y - rhs; }
};

/// McCormick envelope of w = x·y on the box x × y: two under- then two over-estimators.
std::array<EnvelopeCut, 4> build_mce(const Box& x, const Box& y);

struct PmWeights {
  double xi = 1.0;
  double lambda_p = 0.05;  // $/kWh at the PCC
  double lambda_q = 0.005;
};

/// Solver tolerance for PM programs; tight because the duals are the prices.
/// solve_pm retries at the solver defaults if it cannot be met.
inline constexpr double kPmTolerance = 1e-10;

struct NodePhaseVars {
  int p, q, vr, vi, ir, ii, a, b, c, d;
};

struct CiOpfProgram {
  convex::ConvexProgram program;
  const net3p::ThreePhaseNetwork* net = nullptr;
  VarBounds bounds;
  PmWeights weights;
  std::vector<SmoBid> bids;              // per bus, empty optional phases at the slack
  std::vector<NodePhaseVars> vars;       // per node-phase
  std::vector<int> ohm_r_row, ohm_i_row;  // equality row per node-phase
  std::vector<int> p_row, q_row;
};

CiOpfProgram assemble_ciopf(const net3p::ThreePhaseNetwork& net, std::span<const SmoBid> bids,
                            const VarBounds& bounds, const PmWeights& weights);

struct NodePhaseState {
  double p = 0, q = 0, vr = 0, vi = 0, ir = 0, ii = 0, a = 0, b = 0, c = 0, d = 0;

  Complex v() const { return {vr, vi}; }
  Complex i() const { return {ir, ii}; }
};

struct ObjectiveBreakdown {
  double disutility = 0.0;
  double generation_cost = 0.0;
  double losses = 0.0;   // unweighted Σ I_brᴴ R I_br
  double voltage = 0.0;  // unweighted Σ |V − Ṽ|²

  double total(double xi) const { return disutility + generation_cost + xi * (losses + voltage); }
};

struct CiOpfSolution {
  std::vector<NodePhaseState> np;
  Eigen::VectorXcd branch_current;  // per branch-phase
  Eigen::VectorXd lambda_p;         // per node-phase, $/kWh
  Eigen::VectorXd lambda_q;
  Eigen::VectorXcd lambda_i;        // Ohm's-law duals, real and imaginary rows
  ObjectiveBreakdown terms;
  double objective = 0.0;
  convex::KktReport kkt;
  int iterations = 0;

  Eigen::VectorXcd v() const;
  Eigen::VectorXcd i() const;
};

struct PmClearing {
  std::optional<CiOpfSolution> solution;
  convex::SolveStatus status = convex::SolveStatus::numerical_failure;
  std::string message;
  VarBounds bounds;

  bool ok() const { return solution.has_value(); }
};

PmClearing solve_pm(const CiOpfProgram& cp);

ObjectiveBreakdown evaluate_objective(const CiOpfProgram& cp, std::span<const NodePhaseState> state);

struct NodePhasePrice {
  double lambda_p = 0.0;
  double lambda_q = 0.0;
  double lambda_v = 0.0;  // Re(λ_V)
  Complex lambda_v_complex;
};

struct NodePrice {
  std::string bus_id;
  double lambda_p = 0.0;
  double lambda_q = 0.0;
  double lambda_v = 0.0;
};

struct Dlmp {
  std::vector<NodePhasePrice> np;
  std::vector<NodePrice> node;  // averaged over the bus's phases
};

/// λ_V = Yᴴλ_I, i.e. the real embedding Y_ℝᵀ applied to the Ohm's-law duals.
Dlmp extract_dlmp(const net3p::ThreePhaseNetwork& net, const CiOpfSolution& sol, const net3p::AdmittanceMatrix& y);

struct GapReport {
  double max_p = 0.0;  // max |P − (V^R I^R + V^I I^I)|
  double max_q = 0.0;  // max |Q − (V^I I^R − V^R I^I)|
  double ring = 0.0;   // max distance of |V| outside [v_min, v_max]
  double ampacity = 0.0;  // max (|I_br| − i_max)⁺
  std::vector<double> per_node_phase;  // max(P gap, Q gap)

  double max_bilinear() const { return std::max(max_p, max_q); }
};

GapReport relaxation_gap(const net3p::ThreePhaseNetwork& net, const CiOpfSolution& sol,
                         const BoundsOptions& limits = {});

/// Injections at or below this magnitude (p.u.) have no equivalent rate.
inline constexpr double kZeroInjection = 1e-9;

/// (λ_P P + λ_Q Q + λ̄_V ΔV)/P with ΔV = |Re(V/Ṽ) − 1| + |Im(V/Ṽ)|; empty when |P| ≤ kZeroInjection.
std::optional<double> equivalent_rate(double lambda_p, double lambda_q, double lambda_v, double p, double q,
                                      Complex v, Complex v_nominal = {1.0, 0.0});

struct EquivalentRates {
  std::vector<std::optional<double>> node_phase;
  std::vector<std::optional<double>> node;  // Σ_φ numerators / Σ_φ P
};

EquivalentRates equivalent_rates(const net3p::ThreePhaseNetwork& net, const Dlmp& dlmp, const CiOpfSolution& sol);

}  // namespace lem::pm
