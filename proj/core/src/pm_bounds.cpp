#include "lem/pm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

namespace lem {

SmoBid zero_bid(const std::string& bus_id, net3p::PhaseSet phases) {
  SmoBid b;
  b.bus_id = bus_id;
  for (net3p::Phase p : phases.phases()) b.at(p) = SmoPhaseBid{};
  return b;
}

}  // namespace lem

namespace lem::pm {
namespace {

Box hull(std::span<const double> xs) {
  auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  return {*lo, *hi};
}

// Rectangular hull of {r∠θ : r ∈ [r0, r1], θ ∈ [θ0 − w, θ0 + w]}.
std::pair<Box, Box> sector_hull(double r0, double r1, double theta0, double w) {
  std::vector<double> re, im;
  auto push = [&](double r, double t) {
    re.push_back(r * std::cos(t));
    im.push_back(r * std::sin(t));
  };
  for (double r : {r0, r1})
    for (double t : {theta0 - w, theta0 + w}) push(r, t);
  // axis crossings inside the angular window
  const double half_pi = std::numbers::pi / 2;
  for (int k = -8; k <= 8; ++k) {
    const double t = k * half_pi;
    if (t > theta0 - w && t < theta0 + w) push(r1, t);
  }
  if (w == 0.0) {
    re = {r0 * std::cos(theta0), r1 * std::cos(theta0)};
    im = {r0 * std::sin(theta0), r1 * std::sin(theta0)};
  }
  Box bre = hull(re), bim = hull(im);
  // snap round-off so a zero-width direction stays exactly zero-width
  for (Box* b : {&bre, &bim})
    if (std::abs(b->hi - b->lo) < 1e-15) b->hi = b->lo;
  return {bre, bim};
}

Box scale(const Box& b, double s) { return s >= 0 ? Box{s * b.lo, s * b.hi} : Box{s * b.hi, s * b.lo}; }
Box add(const Box& a, const Box& b) { return {a.lo + b.lo, a.hi + b.hi}; }

std::unordered_map<std::string, const SmoBid*> bid_lookup(const net3p::ThreePhaseNetwork& net,
                                                         std::span<const SmoBid> bids) {
  std::unordered_map<std::string, const SmoBid*> out;
  for (const SmoBid& b : bids) {
    if (!net.find_bus(b.bus_id)) throw MissingBidError("bid for unknown bus " + b.bus_id);
    if (!out.emplace(b.bus_id, &b).second) throw MissingBidError("two bids at bus " + b.bus_id);
  }
  return out;
}

}  // namespace

std::array<EnvelopeCut, 4> build_mce(const Box& x, const Box& y) {
  return {{
      {-1.0, y.lo, x.lo, x.lo * y.lo},    // w ≥ x̲y + xy̲ − x̲y̲
      {-1.0, y.hi, x.hi, x.hi * y.hi},    // w ≥ x̄y + xȳ − x̄ȳ
      {1.0, -y.lo, -x.hi, -x.hi * y.lo},  // w ≤ x̄y + xy̲ − x̄y̲
      {1.0, -y.hi, -x.lo, -x.lo * y.hi},  // w ≤ x̲y + xȳ − x̲ȳ
  }};
}

VarBounds preprocess_bounds(const net3p::ThreePhaseNetwork& net, std::span<const SmoBid> bids,
                            const BoundsOptions& options) {
  if (!(options.v_min > 0.0 && options.v_min <= options.v_max))
    throw std::invalid_argument("voltage limits must satisfy 0 < v_min <= v_max");
  if (!(options.theta_window_deg >= 0.0 && options.theta_window_deg < 90.0))
    throw std::invalid_argument("angle window must lie in [0, 90) degrees");
  const auto lookup = bid_lookup(net, bids);
  const std::size_t n = net.node_phase_count();
  const double w = options.theta_window_deg * std::numbers::pi / 180.0;

  VarBounds vb;
  vb.np.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& np = net.node_phases()[k];
    const Complex vn = net.nominal_voltage(k);
    if (net.is_slack(np.bus)) {
      vb.np[k].vr = {vn.real(), vn.real()};
      vb.np[k].vi = {vn.imag(), vn.imag()};
    } else {
      auto [re, im] = sector_hull(options.v_min, options.v_max, std::arg(vn), w);
      vb.np[k].vr = re;
      vb.np[k].vi = im;
    }
  }

  const net3p::AdmittanceMatrix y = net3p::build_admittance(net);
  for (std::size_t k = 0; k < n; ++k) {
    Box ir{0, 0}, ii{0, 0};
    for (std::size_t m = 0; m < n; ++m) {
      const Complex ykm = y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
      if (ykm == Complex{}) continue;
      const Box& vr = vb.np[m].vr;
      const Box& vi = vb.np[m].vi;
      ir = add(ir, add(scale(vr, ykm.real()), scale(vi, -ykm.imag())));
      ii = add(ii, add(scale(vr, ykm.imag()), scale(vi, ykm.real())));
    }
    const auto& np = net.node_phases()[k];
    const std::string& bus = net.buses()[np.bus].id;
    if (!net.is_slack(np.bus)) {
      auto it = lookup.find(bus);
      if (it == lookup.end()) throw MissingBidError("no bid at bus " + bus);
      const auto& pb = it->second->at(np.phase);
      if (!pb) throw MissingBidError(std::string("no bid on phase ") + net3p::to_char(np.phase) + " at bus " + bus);
      double smax = 0.0;
      for (double p : {pb->p_min, pb->p_max})
        for (double q : {pb->q_min, pb->q_max}) smax = std::max(smax, std::hypot(p, q));
      const double imax = smax / options.v_min;
      ir = {std::max(ir.lo, -imax), std::min(ir.hi, imax)};
      ii = {std::max(ii.lo, -imax), std::min(ii.hi, imax)};
      if (ir.lo > ir.hi || ii.lo > ii.hi)
        throw BoundsError(bus + "." + net3p::to_char(np.phase), "empty current box");
    }
    vb.np[k].ir = ir;
    vb.np[k].ii = ii;
  }
  return vb;
}

VarBounds boxes_around(const net3p::ThreePhaseNetwork& net, const Eigen::VectorXcd& v, const Eigen::VectorXcd& i,
                       double width) {
  const std::size_t n = net.node_phase_count();
  if (static_cast<std::size_t>(v.size()) != n || static_cast<std::size_t>(i.size()) != n)
    throw std::invalid_argument("boxes_around: vector size mismatch");
  const double h = 0.5 * width;
  VarBounds vb;
  vb.np.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    auto& b = vb.np[k];
    if (net.is_slack(net.node_phases()[k].bus)) {
      const Complex vn = net.nominal_voltage(k);
      b.vr = {vn.real(), vn.real()};
      b.vi = {vn.imag(), vn.imag()};
    } else {
      b.vr = {v[e].real() - h, v[e].real() + h};
      b.vi = {v[e].imag() - h, v[e].imag() + h};
    }
    b.ir = {i[e].real() - h, i[e].real() + h};
    b.ii = {i[e].imag() - h, i[e].imag() + h};
  }
  return vb;
}

}  // namespace lem::pm
