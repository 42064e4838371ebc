#pragma once

// Three-phase distribution network model: buses, branches, node-phase
// indexing, admittance/incidence assembly and a Newton power-flow reference.

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lem::net3p {

using Complex = std::complex<double>;

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::a, Phase::b, Phase::c};

constexpr int index(Phase p) { return static_cast<int>(p); }
char to_char(Phase p);

/// Subset of {a, b, c}.
class PhaseSet {
public:
  constexpr PhaseSet() = default;
  static PhaseSet from_string(std::string_view letters);  // "abc", "ac", ...
  static constexpr PhaseSet all() { return PhaseSet(0b111); }
  static constexpr PhaseSet single(Phase p) { return PhaseSet(static_cast<std::uint8_t>(1u << index(p))); }

  constexpr bool contains(Phase p) const { return (bits_ >> index(p)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool subset_of(PhaseSet other) const { return (bits_ & ~other.bits_) == 0; }
  int size() const;
  std::vector<Phase> phases() const;
  std::string to_string() const;

  void insert(Phase p) { bits_ = static_cast<std::uint8_t>(bits_ | (1u << index(p))); }

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

/// 1∠0°, 1∠−120°, 1∠120°.
Complex default_nominal(Phase p);

enum class BusKind { slack, pq };

struct Bus {
  std::string id;
  PhaseSet phases = PhaseSet::all();
  BusKind kind = BusKind::pq;
  std::array<Complex, 3> v_nominal{default_nominal(Phase::a), default_nominal(Phase::b),
                                   default_nominal(Phase::c)};

  bool operator==(const Bus&) const = default;
};

/// Series-impedance branch. `z` is |phases| x |phases|, ordered a, b, c over
/// the phases present; `i_max` has one ampacity per phase.
struct Branch {
  std::string id;
  std::string from;
  std::string to;
  PhaseSet phases = PhaseSet::all();
  Eigen::MatrixXcd z;
  Eigen::VectorXd i_max;

  bool operator==(const Branch& o) const {
    return id == o.id && from == o.from && to == o.to && phases == o.phases &&
           z.rows() == o.z.rows() && z.cols() == o.z.cols() && z == o.z &&
           i_max.size() == o.i_max.size() && i_max == o.i_max;
  }
};

struct NodePhase {
  std::size_t bus;
  Phase phase;
};

struct BranchPhase {
  std::size_t branch;
  Phase phase;
};

class NetworkError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Immutable after construction. The constructor validates the data and
/// throws NetworkError on the first violation it finds.
class ThreePhaseNetwork {
public:
  ThreePhaseNetwork(std::vector<Bus> buses, std::vector<Branch> branches, double s_base_va = 1e6,
                    double v_base_v = 2401.78);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  double s_base() const { return s_base_; }
  double v_base() const { return v_base_; }

  std::size_t slack_bus() const { return slack_; }
  std::size_t bus_index(std::string_view id) const;
  std::optional<std::size_t> find_bus(std::string_view id) const;

  /// Node-phases in bus order, phases a→b→c within a bus.
  const std::vector<NodePhase>& node_phases() const { return node_phases_; }
  std::size_t node_phase_count() const { return node_phases_.size(); }
  std::optional<std::size_t> node_phase_index(std::size_t bus, Phase p) const;

  const std::vector<BranchPhase>& branch_phases() const { return branch_phases_; }
  std::optional<std::size_t> branch_phase_index(std::size_t branch, Phase p) const;

  bool is_slack(std::size_t bus) const { return bus == slack_; }
  Complex nominal_voltage(std::size_t node_phase) const;

  bool operator==(const ThreePhaseNetwork& o) const {
    return buses_ == o.buses_ && branches_ == o.branches_ && s_base_ == o.s_base_ && v_base_ == o.v_base_;
  }

private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  double s_base_;
  double v_base_;
  std::size_t slack_ = 0;
  std::unordered_map<std::string, std::size_t> bus_lookup_;
  std::vector<NodePhase> node_phases_;
  std::vector<std::array<int, 3>> np_index_;
  std::vector<BranchPhase> branch_phases_;
  std::vector<std::array<int, 3>> bp_index_;
};

/// Complex Y indexed by node-phase.
using AdmittanceMatrix = Eigen::MatrixXcd;
/// Signed branch-phase x node-phase matrix, entries in {-1, 0, +1}.
using IncidenceMatrix = Eigen::MatrixXd;

AdmittanceMatrix build_admittance(const ThreePhaseNetwork& net);
IncidenceMatrix build_incidence(const ThreePhaseNetwork& net);

/// Block-diagonal branch admittances z⁻¹, indexed by branch-phase.
Eigen::MatrixXcd primitive_admittance(const ThreePhaseNetwork& net);
/// Block-diagonal Re(z), indexed by branch-phase.
Eigen::MatrixXd branch_resistance(const ThreePhaseNetwork& net);
/// Branch-phase currents y·(V_from − V_to) for a node-phase voltage vector.
Eigen::VectorXcd branch_currents(const ThreePhaseNetwork& net, const Eigen::VectorXcd& v);

struct PowerFlowOptions {
  int max_iterations = 50;
  double tolerance = 1e-11;
};

struct PowerFlowResult {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // ‖S − diag(V)·conj(YV)‖∞ over non-slack node-phases
  Eigen::VectorXcd v;
  Eigen::VectorXcd i;
};

/// Newton–Raphson in rectangular coordinates. `injections` holds the
/// complex power injected at each node-phase (generation positive); slack
/// entries are ignored. Divergence is reported through `converged`.
PowerFlowResult power_flow(const ThreePhaseNetwork& net, const Eigen::VectorXcd& injections,
                           const PowerFlowOptions& options = {});

}  // namespace lem::net3p
