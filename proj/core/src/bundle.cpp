#include "lem/scenario.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>

namespace lem::io {
namespace {

namespace fs = std::filesystem;

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

class Csv {
public:
  Csv(const fs::path& path, std::initializer_list<const char*> header) : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
    bool first = true;
    for (const char* h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

  ~Csv() noexcept(false) {
    out_.flush();
    if (!out_ && std::uncaught_exceptions() == 0) throw IoError("write failed for " + path_.string());
  }

private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(char c) { return std::string(1, c); }

  fs::path path_;
  std::ofstream out_;
};

}  // namespace

void apply_overrides(cosim::Scenario& s, const RunOverrides& o) {
  if (o.xi) s.market.xi = *o.xi;
  if (o.epsilon) s.market.epsilon = *o.epsilon;
  if (o.seed) s.market.seed = *o.seed;
  if (o.horizon_min) s.market.horizon_min = *o.horizon_min;
}

void write_bundle(const fs::path& out_dir, const cosim::Scenario& s, const cosim::MarketLog& log,
                  const cosim::Metrics& metrics, const std::string& timestamp) {
  const auto& net = s.network;
  {
    Csv csv(out_dir / "voltages.csv", {"node", "phase", "t_min", "v_lem", "v_no_lem"});
    for (const auto& v : metrics.voltages) csv.row(v.bus_id, net3p::to_char(v.phase), v.t_min, v.v_lem, opt(v.v_base));
  }
  {
    Csv csv(out_dir / "dlmp.csv", {"node", "phase", "t_min", "lambda_p", "lambda_q", "lambda_v", "lambda_eq"});
    for (const auto& e : log.pm)
      for (std::size_t k = 0; k < net.node_phase_count(); ++k) {
        const auto& np = net.node_phases()[k];
        const auto& p = e.dlmp.np[k];
        csv.row(net.buses()[np.bus].id, net3p::to_char(np.phase), e.t_min, p.lambda_p, p.lambda_q, p.lambda_v,
                opt(e.rates.node_phase[k]));
      }
  }
  {
    Csv csv(out_dir / "tariffs.csv", {"smo", "dca", "t_min", "mu_p", "mu_q", "cash_flow"});
    for (const auto& e : log.sm)
      for (const auto& t : e.tariffs.tariffs) csv.row(e.smo_id, t.dca_id, e.t_min, t.mu_p, t.mu_q, t.cash_flow());
  }
  {
    Csv csv(out_dir / "gaps.csv", {"t_min", "max_bilinear", "max_p", "max_q", "ring", "ampacity"});
    for (const auto& e : log.pm)
      csv.row(e.t_min, e.gap.max_bilinear(), e.gap.max_p, e.gap.max_q, e.gap.ring, e.gap.ampacity);
  }
  {
    Csv csv(out_dir / "summary.csv", {"metric", "value"});
    csv.row("pm_clearings", log.pm.size());
    csv.row("sm_clearings", log.sm.size());
    csv.row("halted", log.halted ? 1 : 0);
    csv.row("mean_v_lem", metrics.mean_v_lem);
    csv.row("mean_abs_dev_lem", metrics.mean_dev_lem);
    csv.row("mean_v_no_lem", opt(metrics.mean_v_base));
    csv.row("mean_abs_dev_no_lem", opt(metrics.mean_dev_base));
    csv.row("violations_lem", metrics.violations_lem);
    csv.row("violations_no_lem", metrics.violations_base);
    csv.row("mean_lambda_p", metrics.mean_lambda_p);
    csv.row("mean_lambda_q", metrics.mean_lambda_q);
    csv.row("mean_lambda_v", metrics.mean_lambda_v);
    csv.row("mean_lambda_eq", opt(metrics.mean_lambda_eq));
    csv.row("lambda_eq_samples", metrics.lambda_eq_samples);
    csv.row("max_bilinear_gap", metrics.max_gap);
  }
  {
    const auto& m = s.market;
    nlohmann::ordered_json man;
    man["status"] = log.halted ? "halted" : "complete";
    if (log.halted) {
      man["halt_t_min"] = log.halt_t_min;
      man["halt_reason"] = log.halt_reason;
    }
    man["config"] = {{"dt_s", m.dt_s_min},        {"dt_p", m.dt_p_min}, {"horizon", m.horizon_min},
                     {"xi", m.xi},                {"epsilon", m.epsilon}, {"v_limits", {m.v_min, m.v_max}},
                     {"theta_window", m.theta_window_deg}, {"seed", m.seed},
                     {"flexibility_range", {m.flex_min, m.flex_max}}};
    man["files"] = {"voltages.csv", "dlmp.csv", "tariffs.csv", "gaps.csv", "summary.csv"};
    man["timestamp"] = timestamp;
    std::ofstream out(out_dir / "manifest.json");
    out << man.dump(2) << '\n';
    if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  }
}

namespace {

int run_impl(const fs::path& scenario_path, const fs::path& out_dir, const RunOverrides& overrides,
             std::ostream& log) {
  cosim::Scenario scenario = [&] {
    cosim::Scenario s = parse_scenario(scenario_path);
    apply_overrides(s, overrides);
    return s;
  }();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());
  {
    std::ofstream probe(out_dir / "manifest.json");
    if (!probe) throw IoError("output directory not writable: " + out_dir.string());
  }

  scenario.validate();
  cosim::RunOptions options;
  options.compute_baseline = !overrides.no_lem_baseline;
  const cosim::MarketLog market = cosim::run(scenario, options);
  const cosim::Metrics metrics = cosim::compute_metrics(market, scenario);

  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  write_bundle(out_dir, scenario, market, metrics, std::to_string(secs));

  log << "pm clearings: " << market.pm.size() << ", sm clearings: " << market.sm.size() << '\n';
  if (market.halted) {
    log << "halted at t=" << format_number(market.halt_t_min) << " min: " << market.halt_reason << '\n';
    return kHalted;
  }
  return kOk;
}

}  // namespace

int run_command(const fs::path& scenario_path, const fs::path& out_dir, const RunOverrides& overrides,
                std::ostream& log) {
  try {
    return run_impl(scenario_path, out_dir, overrides, log);
  } catch (const ScenarioError& e) {
    log << e.what() << '\n';
    return kSchema;
  } catch (const cosim::ScenarioInvalid& e) {
    log << "invalid scenario\n  [" << e.kind() << "] " << e.what() << '\n';
    return kSchema;
  } catch (const IoError& e) {
    log << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    log << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    log << "invalid input: " << e.what() << '\n';
    return kSchema;
  }
}

}  // namespace lem::io
