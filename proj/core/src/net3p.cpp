#include "lem/net3p.hpp"

#include <cmath>
#include <numbers>
#include <queue>

namespace lem::net3p {

char to_char(Phase p) { return static_cast<char>('a' + index(p)); }

PhaseSet PhaseSet::from_string(std::string_view letters) {
  PhaseSet set;
  for (char ch : letters) {
    switch (ch) {
      case 'a': case 'A': set.insert(Phase::a); break;
      case 'b': case 'B': set.insert(Phase::b); break;
      case 'c': case 'C': set.insert(Phase::c); break;
      default:
        throw NetworkError(std::string("invalid phase letter '") + ch + "'");
    }
  }
  return set;
}

int PhaseSet::size() const {
  return static_cast<int>(contains(Phase::a)) + static_cast<int>(contains(Phase::b)) +
         static_cast<int>(contains(Phase::c));
}

std::vector<Phase> PhaseSet::phases() const {
  std::vector<Phase> out;
  for (Phase p : kAllPhases)
    if (contains(p)) out.push_back(p);
  return out;
}

std::string PhaseSet::to_string() const {
  std::string s;
  for (Phase p : phases()) s.push_back(to_char(p));
  return s;
}

Complex default_nominal(Phase p) {
  constexpr double deg = std::numbers::pi / 180.0;
  switch (p) {
    case Phase::a: return {1.0, 0.0};
    case Phase::b: return std::polar(1.0, -120.0 * deg);
    case Phase::c: return std::polar(1.0, 120.0 * deg);
  }
  return {1.0, 0.0};
}

ThreePhaseNetwork::ThreePhaseNetwork(std::vector<Bus> buses, std::vector<Branch> branches, double s_base_va,
                                     double v_base_v)
    : buses_(std::move(buses)), branches_(std::move(branches)), s_base_(s_base_va), v_base_(v_base_v) {
  if (!(s_base_ > 0.0) || !(v_base_ > 0.0)) throw NetworkError("s_base and v_base must be positive");
  if (buses_.empty()) throw NetworkError("network has no buses");

  int slack_count = 0;
  for (std::size_t k = 0; k < buses_.size(); ++k) {
    const Bus& bus = buses_[k];
    if (bus.id.empty()) throw NetworkError("bus with empty id");
    if (bus.phases.empty()) throw NetworkError("bus '" + bus.id + "' has no phases");
    if (!bus_lookup_.emplace(bus.id, k).second) throw NetworkError("duplicate bus id '" + bus.id + "'");
    if (bus.kind == BusKind::slack) {
      ++slack_count;
      slack_ = k;
    }
  }
  if (slack_count != 1)
    throw NetworkError("network must have exactly one slack bus (found " + std::to_string(slack_count) + ")");

  if (branches_.empty()) throw NetworkError("network is disconnected: no branches");

  std::unordered_map<std::string, int> branch_ids;
  std::vector<std::vector<std::size_t>> adjacency(buses_.size());
  for (const Branch& br : branches_) {
    if (!branch_ids.emplace(br.id, 1).second) throw NetworkError("duplicate branch id '" + br.id + "'");
    auto from = find_bus(br.from);
    auto to = find_bus(br.to);
    if (!from) throw NetworkError("branch '" + br.id + "' references unknown bus '" + br.from + "'");
    if (!to) throw NetworkError("branch '" + br.id + "' references unknown bus '" + br.to + "'");
    if (*from == *to) throw NetworkError("branch '" + br.id + "' is a self-loop");
    if (br.phases.empty()) throw NetworkError("branch '" + br.id + "' has no phases");
    if (!br.phases.subset_of(buses_[*from].phases) || !br.phases.subset_of(buses_[*to].phases))
      throw NetworkError("branch '" + br.id + "' phases not present at both endpoints");
    const auto n = static_cast<Eigen::Index>(br.phases.size());
    if (br.z.rows() != n || br.z.cols() != n)
      throw NetworkError("branch '" + br.id + "' impedance must be " + std::to_string(n) + "x" + std::to_string(n));
    if (br.i_max.size() != n) throw NetworkError("branch '" + br.id + "' needs one ampacity per phase");
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::abs(br.z(r, r)) == 0.0) throw NetworkError("branch '" + br.id + "' has a zero diagonal impedance");
      if (!(br.i_max(r) > 0.0)) throw NetworkError("branch '" + br.id + "' ampacity must be positive");
      for (Eigen::Index c = r + 1; c < n; ++c)
        if (std::abs(br.z(r, c) - br.z(c, r)) > 1e-12 * (1.0 + std::abs(br.z(r, c))))
          throw NetworkError("branch '" + br.id + "' impedance matrix is not symmetric");
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(br.z);
    if (!lu.isInvertible()) throw NetworkError("branch '" + br.id + "' impedance matrix is singular");
    adjacency[*from].push_back(*to);
    adjacency[*to].push_back(*from);
  }

  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(slack_);
  seen[slack_] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    auto u = frontier.front();
    frontier.pop();
    for (auto v : adjacency[u])
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        frontier.push(v);
      }
  }
  if (reached != buses_.size()) {
    for (std::size_t k = 0; k < buses_.size(); ++k)
      if (!seen[k]) throw NetworkError("network is disconnected: bus '" + buses_[k].id + "' unreachable");
  }

  np_index_.assign(buses_.size(), {-1, -1, -1});
  for (std::size_t k = 0; k < buses_.size(); ++k)
    for (Phase p : buses_[k].phases.phases()) {
      np_index_[k][index(p)] = static_cast<int>(node_phases_.size());
      node_phases_.push_back({k, p});
    }
  bp_index_.assign(branches_.size(), {-1, -1, -1});
  for (std::size_t k = 0; k < branches_.size(); ++k)
    for (Phase p : branches_[k].phases.phases()) {
      bp_index_[k][index(p)] = static_cast<int>(branch_phases_.size());
      branch_phases_.push_back({k, p});
    }
}

std::optional<std::size_t> ThreePhaseNetwork::find_bus(std::string_view id) const {
  auto it = bus_lookup_.find(std::string(id));
  if (it == bus_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t ThreePhaseNetwork::bus_index(std::string_view id) const {
  auto k = find_bus(id);
  if (!k) throw NetworkError("unknown bus '" + std::string(id) + "'");
  return *k;
}

std::optional<std::size_t> ThreePhaseNetwork::node_phase_index(std::size_t bus, Phase p) const {
  int k = np_index_.at(bus)[index(p)];
  if (k < 0) return std::nullopt;
  return static_cast<std::size_t>(k);
}

std::optional<std::size_t> ThreePhaseNetwork::branch_phase_index(std::size_t branch, Phase p) const {
  int k = bp_index_.at(branch)[index(p)];
  if (k < 0) return std::nullopt;
  return static_cast<std::size_t>(k);
}

Complex ThreePhaseNetwork::nominal_voltage(std::size_t node_phase) const {
  const NodePhase& np = node_phases_.at(node_phase);
  return buses_[np.bus].v_nominal[index(np.phase)];
}

IncidenceMatrix build_incidence(const ThreePhaseNetwork& net) {
  const auto& bps = net.branch_phases();
  IncidenceMatrix a = IncidenceMatrix::Zero(static_cast<Eigen::Index>(bps.size()),
                                            static_cast<Eigen::Index>(net.node_phase_count()));
  for (std::size_t r = 0; r < bps.size(); ++r) {
    const Branch& br = net.branches()[bps[r].branch];
    auto from = *net.node_phase_index(net.bus_index(br.from), bps[r].phase);
    auto to = *net.node_phase_index(net.bus_index(br.to), bps[r].phase);
    a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(from)) = 1.0;
    a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(to)) = -1.0;
  }
  return a;
}

Eigen::MatrixXcd primitive_admittance(const ThreePhaseNetwork& net) {
  const auto n = static_cast<Eigen::Index>(net.branch_phases().size());
  Eigen::MatrixXcd yp = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const Branch& br = net.branches()[k];
    Eigen::MatrixXcd y = br.z.inverse();
    auto ph = br.phases.phases();
    for (std::size_t r = 0; r < ph.size(); ++r)
      for (std::size_t c = 0; c < ph.size(); ++c) {
        auto rr = static_cast<Eigen::Index>(*net.branch_phase_index(k, ph[r]));
        auto cc = static_cast<Eigen::Index>(*net.branch_phase_index(k, ph[c]));
        yp(rr, cc) = y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
  }
  return yp;
}

Eigen::MatrixXd branch_resistance(const ThreePhaseNetwork& net) {
  const auto n = static_cast<Eigen::Index>(net.branch_phases().size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const Branch& br = net.branches()[k];
    auto ph = br.phases.phases();
    for (std::size_t i = 0; i < ph.size(); ++i)
      for (std::size_t j = 0; j < ph.size(); ++j)
        r(static_cast<Eigen::Index>(*net.branch_phase_index(k, ph[i])),
          static_cast<Eigen::Index>(*net.branch_phase_index(k, ph[j]))) =
            br.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)).real();
  }
  return r;
}

AdmittanceMatrix build_admittance(const ThreePhaseNetwork& net) {
  // Stamp each branch block directly: +y on (from,from), (to,to); −y off-diagonal.
  const auto n = static_cast<Eigen::Index>(net.node_phase_count());
  AdmittanceMatrix y = AdmittanceMatrix::Zero(n, n);
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    const Branch& br = net.branches()[k];
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(br.z);
    if (!lu.isInvertible()) throw NetworkError("branch '" + br.id + "' impedance matrix is singular");
    Eigen::MatrixXcd yb = lu.inverse();
    auto from = net.bus_index(br.from);
    auto to = net.bus_index(br.to);
    auto ph = br.phases.phases();
    for (std::size_t r = 0; r < ph.size(); ++r)
      for (std::size_t c = 0; c < ph.size(); ++c) {
        const Complex v = yb(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        auto fr = static_cast<Eigen::Index>(*net.node_phase_index(from, ph[r]));
        auto fc = static_cast<Eigen::Index>(*net.node_phase_index(from, ph[c]));
        auto tr = static_cast<Eigen::Index>(*net.node_phase_index(to, ph[r]));
        auto tc = static_cast<Eigen::Index>(*net.node_phase_index(to, ph[c]));
        y(fr, fc) += v;
        y(tr, tc) += v;
        y(fr, tc) -= v;
        y(tr, fc) -= v;
      }
  }
  return y;
}

Eigen::VectorXcd branch_currents(const ThreePhaseNetwork& net, const Eigen::VectorXcd& v) {
  IncidenceMatrix a = build_incidence(net);
  return primitive_admittance(net) * (a.cast<Complex>() * v);
}

}  // namespace lem::net3p
