#include "lem/cosim.hpp"

#include <cmath>

namespace lem::cosim {

Metrics compute_metrics(const MarketLog& log, const Scenario& scenario) {
  const auto& net = scenario.network;
  const MarketConfig& m = scenario.market;
  Metrics out;

  double sum_lem = 0.0, dev_lem = 0.0, sum_base = 0.0, dev_base = 0.0;
  std::size_t n_base = 0;
  bool all_base = !log.pm.empty();
  double sum_lp = 0.0, sum_lq = 0.0, sum_lv = 0.0, sum_eq = 0.0;
  std::size_t n_price = 0;

  for (const PmEntry& e : log.pm) {
    double spatial = 0.0;
    std::size_t count = 0;
    if (!e.v_baseline) all_base = false;
    for (std::size_t k = 0; k < net.node_phase_count(); ++k) {
      const auto& np = net.node_phases()[k];
      if (net.is_slack(np.bus)) continue;
      VoltageSample v;
      v.bus_id = net.buses()[np.bus].id;
      v.phase = np.phase;
      v.pm_index = e.index;
      v.t_min = e.t_min;
      v.v_lem = std::abs(e.solution.np[k].v());
      if (e.v_baseline) v.v_base = std::abs((*e.v_baseline)[static_cast<Eigen::Index>(k)]);
      sum_lem += v.v_lem;
      dev_lem += std::abs(v.v_lem - 1.0);
      if (v.v_lem < m.v_min || v.v_lem > m.v_max) ++out.violations_lem;
      if (v.v_base) {
        sum_base += *v.v_base;
        dev_base += std::abs(*v.v_base - 1.0);
        ++n_base;
        if (*v.v_base < m.v_min || *v.v_base > m.v_max) ++out.violations_base;
      }
      spatial += v.v_lem;
      ++count;
      out.voltages.push_back(std::move(v));
    }
    out.spatial_mean_lem.push_back(count ? spatial / static_cast<double>(count) : 0.0);
    for (const pm::NodePhasePrice& p : e.dlmp.np) {
      sum_lp += p.lambda_p;
      sum_lq += p.lambda_q;
      sum_lv += p.lambda_v;
      ++n_price;
    }
    for (std::size_t i = 0; i < e.rates.node.size(); ++i) {
      if (net.is_slack(i) || !e.rates.node[i]) continue;
      sum_eq += *e.rates.node[i];
      ++out.lambda_eq_samples;
    }
    out.max_gap = std::max(out.max_gap, e.gap.max_bilinear());
  }

  const double n = static_cast<double>(out.voltages.size());
  if (n > 0) {
    out.mean_v_lem = sum_lem / n;
    out.mean_dev_lem = dev_lem / n;
  }
  if (all_base && n_base > 0) {
    out.mean_v_base = sum_base / static_cast<double>(n_base);
    out.mean_dev_base = dev_base / static_cast<double>(n_base);
  }
  if (n_price > 0) {
    out.mean_lambda_p = sum_lp / static_cast<double>(n_price);
    out.mean_lambda_q = sum_lq / static_cast<double>(n_price);
    out.mean_lambda_v = sum_lv / static_cast<double>(n_price);
  }
  if (out.lambda_eq_samples > 0) out.mean_lambda_eq = sum_eq / static_cast<double>(out.lambda_eq_samples);
  return out;
}

}  // namespace lem::cosim
