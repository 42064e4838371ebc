#pragma once

// Bid types exchanged between the secondary market (SMO side) and the
// primary market (PMO side). All quantities are per-unit injections:
// generation positive, consumption negative.

#include "lem/net3p.hpp"

#include <array>
#include <optional>
#include <string>

namespace lem {

struct SmoPhaseBid {
  double p0 = 0.0;
  double q0 = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  /// Preferred (raw baseline) injections; the PM disutility pulls toward these.
  double p_load0 = 0.0;
  double q_load0 = 0.0;

  bool operator==(const SmoPhaseBid&) const = default;
};

struct SmoBid {
  std::string smo_id;
  std::string bus_id;
  std::array<std::optional<SmoPhaseBid>, 3> phases{};
  double alpha_p = 0.0;  // $/kWh per p.u. of injection
  double alpha_q = 0.0;
  double beta_p = 0.0;
  double beta_q = 0.0;

  const std::optional<SmoPhaseBid>& at(net3p::Phase p) const { return phases[static_cast<std::size_t>(net3p::index(p))]; }
  std::optional<SmoPhaseBid>& at(net3p::Phase p) { return phases[static_cast<std::size_t>(net3p::index(p))]; }

  bool operator==(const SmoBid&) const = default;
};

/// A junction bus with no SMO behind it: fixed zero injection.
SmoBid zero_bid(const std::string& bus_id, net3p::PhaseSet phases);

}  // namespace lem
