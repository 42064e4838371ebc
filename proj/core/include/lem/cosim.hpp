#pragma once

// Two-cadence co-simulation: SMs clear every Δt_s against the latest PM
// setpoints, the PM clears every Δt_p on bids aggregated from the SMs.

#include "lem/bids.hpp"
#include "lem/net3p.hpp"
#include "lem/pm.hpp"
#include "lem/sm.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lem::cosim {

struct SmoSpec {
  std::string id;
  std::string bus_id;
  std::optional<double> alpha_p;  // $/kWh; defaults to 0.8 × mean LMP
  std::optional<double> alpha_q;

  bool operator==(const SmoSpec&) const = default;
};

struct DcaPhaseBase {
  double p = 0.0;  // p.u. injection
  double q = 0.0;

  bool operator==(const DcaPhaseBase&) const = default;
};

struct DcaSpec {
  std::string id;
  std::string smo_id;
  sm::CommodityKind p_kind = sm::CommodityKind::load;
  sm::CommodityKind q_kind = sm::CommodityKind::load;
  std::array<std::optional<DcaPhaseBase>, 3> phases{};
  std::string p_profile;  // empty: constant
  std::string q_profile;
  double commitment = 1.0;
  std::optional<double> flexibility;  // fixed fraction instead of a random draw
  std::optional<double> beta_p;
  std::optional<double> beta_q;

  const std::optional<DcaPhaseBase>& at(net3p::Phase p) const { return phases[static_cast<std::size_t>(net3p::index(p))]; }

  bool operator==(const DcaSpec&) const = default;
};

struct MarketConfig {
  double dt_s_min = 1.0;
  double dt_p_min = 5.0;
  double horizon_min = 60.0;
  double xi = 1.0;
  double epsilon = 0.05;
  double v_min = 0.95;
  double v_max = 1.05;
  double theta_window_deg = 15.0;
  std::uint64_t seed = 1;
  double flex_min = 0.1;
  double flex_max = 0.3;

  bool operator==(const MarketConfig&) const = default;
};

/// LMP series indexed by PM interval; a single entry is constant.
struct PriceSeries {
  std::vector<double> lambda_p{0.05};
  std::vector<double> lambda_q{0.005};

  bool operator==(const PriceSeries&) const = default;
};

struct Scenario {
  net3p::ThreePhaseNetwork network;
  std::vector<SmoSpec> smos;
  std::vector<DcaSpec> dcas;
  std::map<std::string, std::vector<double>> profiles;  // multipliers per SM step
  MarketConfig market;
  PriceSeries prices;

  std::size_t sm_steps() const;
  std::size_t pm_intervals() const;
  std::size_t steps_per_pm() const;
  double lambda_p(std::size_t pm_index) const;
  double lambda_q(std::size_t pm_index) const;

  /// Throws ScenarioInvalid naming the first broken invariant.
  void validate() const;

  bool operator==(const Scenario&) const = default;
};

class ScenarioInvalid : public std::invalid_argument {
public:
  /// kind: "schema", "reference" or "cadence"
  ScenarioInvalid(std::string kind, std::string path, const std::string& what)
      : std::invalid_argument(path + ": " + what), kind_(std::move(kind)), path_(std::move(path)) {}
  const std::string& kind() const { return kind_; }
  const std::string& path() const { return path_; }

private:
  std::string kind_;
  std::string path_;
};

/// Range around a baseline: ± fraction·|baseline|, loads clipped to curtailment.
sm::DcaPhaseBid flexible_range(double p0, double q0, double frac_p, double frac_q, sm::CommodityKind p_kind,
                               sm::CommodityKind q_kind);

struct BidDraws {
  std::vector<double> frac_p, frac_q, beta_p, beta_q;  // per DCA
};

/// Deterministic in the scenario seed.
BidDraws draw_bid_parameters(const Scenario& s);

std::vector<sm::DcaBid> generate_synthetic_bids(const Scenario& s, const BidDraws& draws, std::size_t sm_step);

/// Widens a fresh bid to cover the range the DCA was directed to hold by its
/// last schedule. A load whose range must grow downward takes the new lower
/// edge as its baseline.
void extend_to_commitment(sm::DcaBid& bid, const sm::DcaSchedule& committed);

/// Raw baseline injection per node-phase at an SM step.
Eigen::VectorXcd baseline_injections(const Scenario& s, std::size_t sm_step);

struct SmEntry {
  std::size_t step = 0;
  std::size_t pm_index = 0;  // PM clearing whose setpoints were used
  double t_min = 0.0;
  std::string smo_id;
  std::vector<sm::DcaBid> bids;
  sm::PmSetpoint setpoint;
  sm::SmClearingResult result;
  sm::CommoditySets sets;
  sm::TariffResult tariffs;
};

struct PmEntry {
  std::size_t index = 0;
  double t_min = 0.0;
  std::vector<SmoBid> bids;
  pm::CiOpfSolution solution;
  pm::Dlmp dlmp;
  pm::GapReport gap;
  pm::EquivalentRates rates;
  std::optional<Eigen::VectorXcd> v_baseline;  // Newton on raw baselines
};

struct MarketLog {
  std::vector<PmEntry> pm;
  std::vector<SmEntry> sm;
  bool halted = false;
  double halt_t_min = 0.0;
  std::string halt_reason;
};

struct RunOptions {
  bool compute_baseline = true;  // no-LEM power flow per PM interval
};

MarketLog run(const Scenario& scenario, const RunOptions& options = {});

struct VoltageSample {
  std::string bus_id;
  net3p::Phase phase = net3p::Phase::a;
  std::size_t pm_index = 0;
  double t_min = 0.0;
  double v_lem = 0.0;
  std::optional<double> v_base;
};

struct Metrics {
  std::vector<VoltageSample> voltages;  // non-slack node-phases
  double mean_v_lem = 0.0;
  double mean_dev_lem = 0.0;  // mean |(|V| − 1)|
  std::optional<double> mean_v_base;
  std::optional<double> mean_dev_base;
  std::vector<double> spatial_mean_lem;  // per PM interval
  int violations_lem = 0;                // samples outside [v_min, v_max]
  int violations_base = 0;
  double mean_lambda_p = 0.0;
  double mean_lambda_q = 0.0;
  double mean_lambda_v = 0.0;
  std::optional<double> mean_lambda_eq;  // over (node, t) with defined rates
  std::size_t lambda_eq_samples = 0;
  double max_gap = 0.0;
};

Metrics compute_metrics(const MarketLog& log, const Scenario& scenario);

}  // namespace lem::cosim
