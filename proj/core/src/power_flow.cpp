#include "lem/net3p.hpp"

#include <cmath>

namespace lem::net3p {

namespace {

double mismatch(const Eigen::VectorXcd& v, const Eigen::VectorXcd& i, const Eigen::VectorXcd& s_spec,
                const std::vector<Eigen::Index>& unknown, Eigen::VectorXd& f) {
  const auto m = static_cast<Eigen::Index>(unknown.size());
  f.resize(2 * m);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto n = unknown[static_cast<std::size_t>(k)];
    const Complex d = v(n) * std::conj(i(n)) - s_spec(n);
    f(k) = d.real();
    f(m + k) = d.imag();
    worst = std::max({worst, std::abs(d.real()), std::abs(d.imag())});
  }
  return worst;
}

}  // namespace

PowerFlowResult power_flow(const ThreePhaseNetwork& net, const Eigen::VectorXcd& injections,
                           const PowerFlowOptions& options) {
  const auto n = static_cast<Eigen::Index>(net.node_phase_count());
  if (injections.size() != n) throw NetworkError("power_flow: injection vector has wrong length");

  const AdmittanceMatrix y = build_admittance(net);
  std::vector<Eigen::Index> unknown;
  PowerFlowResult out;
  out.v.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.v(k) = net.nominal_voltage(static_cast<std::size_t>(k));
    if (!net.is_slack(net.node_phases()[static_cast<std::size_t>(k)].bus)) unknown.push_back(k);
  }
  const auto m = static_cast<Eigen::Index>(unknown.size());

  Eigen::VectorXd f;
  Eigen::MatrixXd jac(2 * m, 2 * m);
  out.i = y * out.v;
  out.residual = mismatch(out.v, out.i, injections, unknown, f);

  while (out.residual > options.tolerance) {
    if (out.iterations >= options.max_iterations || !std::isfinite(out.residual)) {
      out.converged = false;
      return out;
    }
    // dS_k/dVR_m = δ_km conj(I_k) + V_k conj(Y_km);  dS_k/dVI_m = j δ_km conj(I_k) − j V_k conj(Y_km)
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto kr = unknown[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto kc = unknown[static_cast<std::size_t>(c)];
        Complex d_re = out.v(kr) * std::conj(y(kr, kc));
        Complex d_im = Complex(0.0, -1.0) * out.v(kr) * std::conj(y(kr, kc));
        if (kr == kc) {
          d_re += std::conj(out.i(kr));
          d_im += Complex(0.0, 1.0) * std::conj(out.i(kr));
        }
        jac(r, c) = d_re.real();
        jac(m + r, c) = d_re.imag();
        jac(r, m + c) = d_im.real();
        jac(m + r, m + c) = d_im.imag();
      }
    }
    Eigen::VectorXd dx = jac.partialPivLu().solve(-f);
    for (Eigen::Index k = 0; k < m; ++k)
      out.v(unknown[static_cast<std::size_t>(k)]) += Complex(dx(k), dx(m + k));
    out.i = y * out.v;
    out.residual = mismatch(out.v, out.i, injections, unknown, f);
    ++out.iterations;
  }
  out.converged = true;
  return out;
}

}  // namespace lem::net3p
