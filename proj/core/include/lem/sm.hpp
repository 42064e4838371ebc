#pragma once

// Secondary-market clearing for one SMO: lexicographic scheduling of its
// DCAs against the PM setpoint, ex-post budget-balanced retail tariffs, and
// aggregation of the cleared schedules into the SMO's next PM bid.

#include "lem/bids.hpp"
#include "lem/convex.hpp"
#include "lem/net3p.hpp"

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lem::sm {

using net3p::Phase;

enum class CommodityKind { load, generator };

struct DcaPhaseBid {
  double p0 = 0.0;
  double q0 = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;

  bool operator==(const DcaPhaseBid&) const = default;
};

/// Flexibility bid of one DCA. Ranges are net injections (p.u.); a load may
/// only curtail, so its lower injection limit equals its baseline.
struct DcaBid {
  std::string dca_id;
  std::string smo_id;
  CommodityKind p_kind = CommodityKind::generator;
  CommodityKind q_kind = CommodityKind::generator;
  std::array<std::optional<DcaPhaseBid>, 3> phases{};
  double commitment = 1.0;  // C ∈ [0, 1]
  double beta_p = 0.5;
  double beta_q = 0.5;

  const std::optional<DcaPhaseBid>& at(Phase p) const { return phases[static_cast<std::size_t>(net3p::index(p))]; }
  std::optional<DcaPhaseBid>& at(Phase p) { return phases[static_cast<std::size_t>(net3p::index(p))]; }

  /// Throws BidError on an invariant violation.
  void validate() const;

  bool operator==(const DcaBid&) const = default;
};

class BidError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct PmPhaseSetpoint {
  double p = 0.0;     // p.u.
  double q = 0.0;
  double mu_p = 0.0;  // $/kWh
  double mu_q = 0.0;  // $/kVARh
};

/// Setpoints and prices from the most recent PM clearing at `timestamp_min`.
struct PmSetpoint {
  std::array<std::optional<PmPhaseSetpoint>, 3> phases{};
  double timestamp_min = 0.0;

  const std::optional<PmPhaseSetpoint>& at(Phase p) const { return phases[static_cast<std::size_t>(net3p::index(p))]; }
  std::optional<PmPhaseSetpoint>& at(Phase p) { return phases[static_cast<std::size_t>(net3p::index(p))]; }
};

struct DcaPhaseSchedule {
  double p = 0.0;
  double q = 0.0;
  double dp = 0.0;  // symmetric radius around p
  double dq = 0.0;
};

struct DcaSchedule {
  std::string dca_id;
  std::array<std::optional<DcaPhaseSchedule>, 3> phases{};

  const std::optional<DcaPhaseSchedule>& at(Phase p) const { return phases[static_cast<std::size_t>(net3p::index(p))]; }
  double net_p() const;
  double net_q() const;
};

enum class Stage1Objective {
  /// maximize Σ C_j Σ_φ (δP + δQ): linear, the default
  flexibility_surrogate,
  /// minimize −Σ C_j Σ_φ [(P−P⁰)² + (Q−Q⁰)²] by vertex enumeration (tiny instances only)
  literal_enumeration,
};

struct SmOptions {
  double epsilon = 0.05;
  Stage1Objective stage1 = Stage1Objective::flexibility_surrogate;
  double tie_break_weight = 1e-9;
  double balance_tol = 1e-9;  // setpoints this far outside the attainable range are accepted
  double pin_tol = 1e-6;      // relative distance to a range edge below which the split is fixed
};

struct StageRecord {
  std::string objective;  // "f1", "f3", "f4"
  double value = 0.0;     // F_k at this stage's solution
  std::vector<double> earlier;  // F_ℓ of each earlier stage at this stage's solution
  convex::KktReport kkt;
  int iterations = 0;
};

struct SmClearingResult {
  std::string smo_id;
  std::vector<DcaSchedule> schedules;  // same order as the bids
  std::vector<StageRecord> stages;     // in solve order
  /// F_ℓ of every objective evaluated at the final schedule.
  double final_f1 = 0.0;
  double final_f3 = 0.0;
  double final_f4 = 0.0;
};

/// Names the balance equation that no split of the bids can satisfy.
struct BalanceViolation {
  Phase phase = Phase::a;
  char commodity = 'P';
  double required = 0.0;
  double attainable_min = 0.0;
  double attainable_max = 0.0;

  std::string describe() const;
};

struct SmClearing {
  std::optional<SmClearingResult> result;
  std::optional<BalanceViolation> violation;
  std::string message;

  bool ok() const { return result.has_value(); }
};

/// Stages run f1 ≻ f3 ≻ f4, each later stage constrained by
/// F_ℓ ≤ F_ℓ* + ε|F_ℓ*| for every earlier ℓ.
SmClearing clear_sm_lexicographic(const std::string& smo_id, std::span<const DcaBid> bids,
                                  const PmSetpoint& setpoint, const SmOptions& options = {});

/// Indices into SmClearingResult::schedules, split per commodity by the sign
/// of the net injection summed over a DCA's phases.
struct CommoditySets {
  std::vector<std::size_t> gen_p;
  std::vector<std::size_t> load_p;
  std::vector<std::size_t> gen_q;
  std::vector<std::size_t> load_q;
};

CommoditySets classify_commodity_sets(const SmClearingResult& result, double zero_tol = 1e-9);

struct PriceMultiplier {
  double y_p = 0.0;
  double y_q = 0.0;
};

std::vector<PriceMultiplier> compute_price_multipliers(const CommoditySets& sets, std::size_t dca_count);

struct DcaTariff {
  std::string dca_id;
  double mu_p = 0.0;  // $/kWh, same on every phase
  double mu_q = 0.0;  // $/kVARh
  double cash_p = 0.0;  // $ paid DCA → SMO (negative: SMO pays the DCA)
  double cash_q = 0.0;

  double cash_flow() const { return cash_p + cash_q; }
};

struct TariffResult {
  double r_pm = 0.0;  // $ net revenue of the SMO from the PM clearing
  std::vector<DcaTariff> tariffs;
  double net_cash_flow = 0.0;  // Σ DCA → SMO
};

struct TariffUnits {
  double dt_s_h = 1.0 / 60.0;
  double dt_p_h = 5.0 / 60.0;
  double s_base_kw = 1000.0;
};

TariffResult compute_retail_tariffs(const SmClearingResult& result, const CommoditySets& sets,
                                    const PmSetpoint& setpoint, const TariffUnits& units);

struct SmoBidTerms {
  std::string bus_id;
  double alpha_p = 0.0;
  double alpha_q = 0.0;
};

/// Aggregates the last clearing in `window` into the SMO's PM bid.
/// `bids` are the DCA bids of that clearing (for β and raw baselines).
SmoBid aggregate_smo_bid(const std::string& smo_id, std::span<const SmClearingResult> window,
                         std::span<const DcaBid> bids, const SmoBidTerms& terms);

/// Bid used before any SM clearing exists: Minkowski sum of the DCA ranges.
SmoBid bootstrap_smo_bid(const std::string& smo_id, std::span<const DcaBid> bids, const SmoBidTerms& terms);

}  // namespace lem::sm
