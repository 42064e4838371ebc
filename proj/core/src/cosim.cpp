#include "lem/cosim.hpp"

#include <cmath>
#include <random>
#include <set>

namespace lem::cosim {
namespace {

bool is_multiple(double a, double b) {
  const double r = a / b;
  return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r) && std::round(r) >= 1.0;
}

double pick(const std::vector<double>& series, std::size_t i) {
  return series.size() == 1 ? series[0] : series.at(i);
}

// Uniform in [0, 1) from the top 53 bits.
class Uniform {
public:
  explicit Uniform(std::uint64_t seed) : rng_(seed) {}
  double operator()(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1p-53; }

private:
  std::mt19937_64 rng_;
};

double profile_value(const Scenario& s, const std::string& name, std::size_t step) {
  if (name.empty()) return 1.0;
  return pick(s.profiles.at(name), step);
}

}  // namespace

std::size_t Scenario::sm_steps() const {
  return static_cast<std::size_t>(std::llround(market.horizon_min / market.dt_s_min));
}
std::size_t Scenario::pm_intervals() const {
  return static_cast<std::size_t>(std::llround(market.horizon_min / market.dt_p_min));
}
std::size_t Scenario::steps_per_pm() const {
  return static_cast<std::size_t>(std::llround(market.dt_p_min / market.dt_s_min));
}
double Scenario::lambda_p(std::size_t pm_index) const { return pick(prices.lambda_p, pm_index); }
double Scenario::lambda_q(std::size_t pm_index) const { return pick(prices.lambda_q, pm_index); }

void Scenario::validate() const {
  const MarketConfig& m = market;
  auto schema = [](const std::string& path, const std::string& what) { throw ScenarioInvalid("schema", path, what); };
  auto ref = [](const std::string& path, const std::string& what) { throw ScenarioInvalid("reference", path, what); };

  if (!(m.dt_s_min > 0.0)) schema("market.dt_s", "must be positive");
  if (!(m.dt_p_min > 0.0)) schema("market.dt_p", "must be positive");
  if (!is_multiple(m.dt_p_min, m.dt_s_min))
    throw ScenarioInvalid("cadence", "market.dt_p", "dt_p must be an integer multiple of dt_s");
  if (!(m.horizon_min > 0.0) || !is_multiple(m.horizon_min, m.dt_p_min))
    throw ScenarioInvalid("cadence", "market.horizon", "horizon must be a positive multiple of dt_p");
  if (!(m.xi >= 0.0)) schema("market.xi", "must be non-negative");
  if (!(m.epsilon >= 0.0)) schema("market.epsilon", "must be non-negative");
  if (!(m.v_min > 0.0 && m.v_min <= 1.0 && m.v_max >= 1.0)) schema("market.v_limits", "must bracket 1.0 p.u.");
  if (!(m.theta_window_deg >= 0.0 && m.theta_window_deg < 90.0)) schema("market.theta_window", "must lie in [0, 90)");
  if (!(m.flex_min > 0.0 && m.flex_min <= m.flex_max && m.flex_max < 1.0))
    schema("market.flexibility_range", "must lie inside (0, 1)");

  if (prices.lambda_p.empty() || prices.lambda_q.empty()) schema("prices", "LMP series must be non-empty");
  if (prices.lambda_p.size() != 1 && prices.lambda_p.size() < pm_intervals())
    throw ScenarioInvalid("cadence", "prices.lambda_p", "series shorter than the number of PM intervals");
  if (prices.lambda_q.size() != 1 && prices.lambda_q.size() < pm_intervals())
    throw ScenarioInvalid("cadence", "prices.lambda_q", "series shorter than the number of PM intervals");

  for (const auto& [name, series] : profiles) {
    if (series.empty()) schema("profiles." + name, "empty series");
    if (series.size() != 1 && series.size() < sm_steps())
      throw ScenarioInvalid("cadence", "profiles." + name, "series shorter than the number of SM steps");
  }

  std::set<std::string> smo_ids, smo_buses;
  for (const SmoSpec& s : smos) {
    const std::string path = "population.smos." + s.id;
    if (!smo_ids.insert(s.id).second) schema(path, "duplicate SMO id");
    const auto bus = network.find_bus(s.bus_id);
    if (!bus) ref(path, "unknown bus " + s.bus_id);
    if (network.is_slack(*bus)) ref(path, "SMO placed at the slack bus");
    if (!smo_buses.insert(s.bus_id).second) ref(path, "second SMO at bus " + s.bus_id);
  }
  std::set<std::string> dca_ids;
  for (const DcaSpec& d : dcas) {
    const std::string path = "population.dcas." + d.id;
    if (!dca_ids.insert(d.id).second) schema(path, "duplicate DCA id");
    const SmoSpec* smo = nullptr;
    for (const SmoSpec& s : smos)
      if (s.id == d.smo_id) smo = &s;
    if (!smo) ref(path, "unknown SMO " + d.smo_id);
    const net3p::Bus& bus = network.buses()[network.bus_index(smo->bus_id)];
    bool any = false;
    for (net3p::Phase p : net3p::kAllPhases) {
      if (!d.at(p)) continue;
      any = true;
      if (!bus.phases.contains(p)) ref(path, std::string("phase ") + net3p::to_char(p) + " absent at bus " + bus.id);
    }
    if (!any) schema(path, "no phases");
    for (const std::string* prof : {&d.p_profile, &d.q_profile})
      if (!prof->empty() && !profiles.contains(*prof)) ref(path, "unknown profile " + *prof);
    if (!(d.commitment >= 0.0 && d.commitment <= 1.0)) schema(path, "commitment outside [0, 1]");
    if (d.flexibility && !(*d.flexibility >= 0.0 && *d.flexibility < 1.0)) schema(path, "flexibility outside [0, 1)");
    if ((d.beta_p && !(*d.beta_p > 0.0)) || (d.beta_q && !(*d.beta_q > 0.0))) schema(path, "beta must be positive");
  }
}

sm::DcaPhaseBid flexible_range(double p0, double q0, double frac_p, double frac_q, sm::CommodityKind p_kind,
                               sm::CommodityKind q_kind) {
  sm::DcaPhaseBid b;
  b.p0 = p0;
  b.q0 = q0;
  const double wp = frac_p * std::abs(p0);
  const double wq = frac_q * std::abs(q0);
  b.p_min = p_kind == sm::CommodityKind::load ? p0 : p0 - wp;
  b.p_max = p0 + wp;
  b.q_min = q_kind == sm::CommodityKind::load ? q0 : q0 - wq;
  b.q_max = q0 + wq;
  return b;
}

BidDraws draw_bid_parameters(const Scenario& s) {
  Uniform u(s.market.seed);
  BidDraws d;
  for (const DcaSpec& spec : s.dcas) {
    const double fp = u(s.market.flex_min, s.market.flex_max);
    const double fq = u(s.market.flex_min, s.market.flex_max);
    const double bp = u(0.1, 1.0);
    const double bq = u(0.1, 1.0);
    d.frac_p.push_back(spec.flexibility.value_or(fp));
    d.frac_q.push_back(spec.flexibility.value_or(fq));
    d.beta_p.push_back(spec.beta_p.value_or(bp));
    d.beta_q.push_back(spec.beta_q.value_or(bq));
  }
  return d;
}

std::vector<sm::DcaBid> generate_synthetic_bids(const Scenario& s, const BidDraws& draws, std::size_t sm_step) {
  std::vector<sm::DcaBid> out;
  out.reserve(s.dcas.size());
  for (std::size_t j = 0; j < s.dcas.size(); ++j) {
    const DcaSpec& spec = s.dcas[j];
    sm::DcaBid b;
    b.dca_id = spec.id;
    b.smo_id = spec.smo_id;
    b.p_kind = spec.p_kind;
    b.q_kind = spec.q_kind;
    b.commitment = spec.commitment;
    b.beta_p = draws.beta_p[j];
    b.beta_q = draws.beta_q[j];
    const double mp = profile_value(s, spec.p_profile, sm_step);
    const double mq = profile_value(s, spec.q_profile, sm_step);
    for (net3p::Phase p : net3p::kAllPhases) {
      const auto& base = spec.at(p);
      if (!base) continue;
      b.phases[static_cast<std::size_t>(net3p::index(p))] =
          flexible_range(base->p * mp, base->q * mq, draws.frac_p[j], draws.frac_q[j], spec.p_kind, spec.q_kind);
    }
    out.push_back(std::move(b));
  }
  return out;
}

void extend_to_commitment(sm::DcaBid& bid, const sm::DcaSchedule& committed) {
  for (net3p::Phase p : net3p::kAllPhases) {
    auto& b = bid.at(p);
    const auto& c = committed.at(p);
    if (!b || !c) continue;
    b->p_min = std::min(b->p_min, c->p - c->dp);
    b->p_max = std::max(b->p_max, c->p + c->dp);
    b->q_min = std::min(b->q_min, c->q - c->dq);
    b->q_max = std::max(b->q_max, c->q + c->dq);
    if (bid.p_kind == sm::CommodityKind::load) b->p0 = b->p_min;
    if (bid.q_kind == sm::CommodityKind::load) b->q0 = b->q_min;
  }
}

Eigen::VectorXcd baseline_injections(const Scenario& s, std::size_t sm_step) {
  const auto& net = s.network;
  Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(net.node_phase_count()));
  for (const DcaSpec& d : s.dcas) {
    std::size_t bus = 0;
    for (const SmoSpec& smo : s.smos)
      if (smo.id == d.smo_id) bus = net.bus_index(smo.bus_id);
    const double mp = profile_value(s, d.p_profile, sm_step);
    const double mq = profile_value(s, d.q_profile, sm_step);
    for (net3p::Phase p : net3p::kAllPhases) {
      const auto& base = d.at(p);
      if (!base) continue;
      inj[static_cast<Eigen::Index>(*net.node_phase_index(bus, p))] += net3p::Complex(base->p * mp, base->q * mq);
    }
  }
  return inj;
}

MarketLog run(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  const auto& net = scenario.network;
  const MarketConfig& m = scenario.market;
  const std::size_t k_steps = scenario.steps_per_pm();
  const BidDraws draws = draw_bid_parameters(scenario);
  const net3p::AdmittanceMatrix y = net3p::build_admittance(net);

  double mean_lmp_p = 0.0, mean_lmp_q = 0.0;
  for (double v : scenario.prices.lambda_p) mean_lmp_p += v;
  for (double v : scenario.prices.lambda_q) mean_lmp_q += v;
  mean_lmp_p /= static_cast<double>(scenario.prices.lambda_p.size());
  mean_lmp_q /= static_cast<double>(scenario.prices.lambda_q.size());

  const std::size_t n_smo = scenario.smos.size();
  std::vector<sm::SmoBidTerms> terms(n_smo);
  std::vector<std::size_t> smo_bus(n_smo);
  for (std::size_t s = 0; s < n_smo; ++s) {
    const SmoSpec& spec = scenario.smos[s];
    terms[s] = {spec.bus_id, spec.alpha_p.value_or(0.8 * mean_lmp_p), spec.alpha_q.value_or(0.8 * mean_lmp_q)};
    smo_bus[s] = net.bus_index(spec.bus_id);
  }
  auto bids_of = [&](const std::vector<sm::DcaBid>& all, std::size_t s) {
    std::vector<sm::DcaBid> out;
    for (const auto& b : all)
      if (b.smo_id == scenario.smos[s].id) out.push_back(b);
    return out;
  };

  const sm::TariffUnits units{m.dt_s_min / 60.0, m.dt_p_min / 60.0, net.s_base() / 1000.0};
  sm::SmOptions sm_options;
  sm_options.epsilon = m.epsilon;
  const pm::BoundsOptions bounds_options{m.theta_window_deg, m.v_min, m.v_max};

  MarketLog log;
  std::vector<std::optional<sm::SmClearingResult>> last_result(n_smo);
  std::vector<std::vector<sm::DcaBid>> last_bids(n_smo);

  for (std::size_t tp = 0; tp < scenario.pm_intervals(); ++tp) {
    const std::size_t step0 = tp * k_steps;
    const double t_pm = static_cast<double>(tp) * m.dt_p_min;

    std::vector<SmoBid> smo_bids;
    const auto bids_now = generate_synthetic_bids(scenario, draws, step0);
    for (std::size_t s = 0; s < n_smo; ++s) {
      const std::string& id = scenario.smos[s].id;
      if (last_result[s])
        smo_bids.push_back(sm::aggregate_smo_bid(id, std::span(&*last_result[s], 1), last_bids[s], terms[s]));
      else
        smo_bids.push_back(sm::bootstrap_smo_bid(id, bids_of(bids_now, s), terms[s]));
      // an SMO without DCAs on some bus phase still owes a (zero) bid there
      for (net3p::Phase p : net.buses()[smo_bus[s]].phases.phases())
        if (!smo_bids.back().at(p)) smo_bids.back().at(p) = SmoPhaseBid{};
    }
    std::vector<SmoBid> pm_bids = smo_bids;
    for (std::size_t i = 0; i < net.buses().size(); ++i) {
      if (net.is_slack(i)) continue;
      bool covered = false;
      for (std::size_t b : smo_bus) covered |= b == i;
      if (!covered) pm_bids.push_back(zero_bid(net.buses()[i].id, net.buses()[i].phases));
    }

    pm::PmClearing cleared;
    try {
      const pm::VarBounds bounds = pm::preprocess_bounds(net, pm_bids, bounds_options);
      const pm::CiOpfProgram cp =
          pm::assemble_ciopf(net, pm_bids, bounds, {m.xi, scenario.lambda_p(tp), scenario.lambda_q(tp)});
      cleared = pm::solve_pm(cp);
    } catch (const pm::BoundsError& e) {
      cleared.message = e.what();
    }
    if (!cleared.ok()) {
      log.halted = true;
      log.halt_t_min = t_pm;
      log.halt_reason = "PM interval " + std::to_string(tp) + ": " + cleared.message;
      return log;
    }

    PmEntry entry;
    entry.index = tp;
    entry.t_min = t_pm;
    entry.bids = smo_bids;
    entry.solution = std::move(*cleared.solution);
    entry.dlmp = pm::extract_dlmp(net, entry.solution, y);
    entry.gap = pm::relaxation_gap(net, entry.solution, bounds_options);
    entry.rates = pm::equivalent_rates(net, entry.dlmp, entry.solution);
    if (options.compute_baseline) {
      const auto pf = net3p::power_flow(net, baseline_injections(scenario, step0));
      if (pf.converged) entry.v_baseline = pf.v;
    }

    std::vector<sm::PmSetpoint> setpoints(n_smo);
    for (std::size_t s = 0; s < n_smo; ++s) {
      setpoints[s].timestamp_min = t_pm;
      for (net3p::Phase p : net.buses()[smo_bus[s]].phases.phases()) {
        const std::size_t k = *net.node_phase_index(smo_bus[s], p);
        const auto& st = entry.solution.np[k];
        setpoints[s].at(p) = sm::PmPhaseSetpoint{st.p, st.q, entry.dlmp.np[k].lambda_p, entry.dlmp.np[k].lambda_q};
      }
    }
    log.pm.push_back(std::move(entry));

    for (std::size_t ks = 0; ks < k_steps; ++ks) {
      const std::size_t step = step0 + ks;
      const double t_sm = static_cast<double>(step) * m.dt_s_min;
      const auto all_bids = ks == 0 ? bids_now : generate_synthetic_bids(scenario, draws, step);
      for (std::size_t s = 0; s < n_smo; ++s) {
        auto bids = bids_of(all_bids, s);
        if (last_result[s])
          for (std::size_t j = 0; j < bids.size(); ++j) extend_to_commitment(bids[j], last_result[s]->schedules[j]);
        const std::string& id = scenario.smos[s].id;
        sm::SmClearing c = sm::clear_sm_lexicographic(id, bids, setpoints[s], sm_options);
        if (!c.ok()) {
          log.halted = true;
          log.halt_t_min = t_sm;
          log.halt_reason = "SM step " + std::to_string(step) + ": " + c.message;
          return log;
        }
        SmEntry e;
        e.step = step;
        e.pm_index = tp;
        e.t_min = t_sm;
        e.smo_id = id;
        e.setpoint = setpoints[s];
        e.result = std::move(*c.result);
        e.sets = sm::classify_commodity_sets(e.result);
        e.tariffs = sm::compute_retail_tariffs(e.result, e.sets, e.setpoint, units);
        last_result[s] = e.result;
        last_bids[s] = bids;
        e.bids = std::move(bids);
        log.sm.push_back(std::move(e));
      }
    }
  }
  return log;
}

}  // namespace lem::cosim
