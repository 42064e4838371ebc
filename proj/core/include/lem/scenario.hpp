#pragma once

// Scenario files (JSON, schema-versioned) and result bundles.

#include "lem/cosim.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lem::io {

inline constexpr int kSchemaVersion = 1;

struct ScenarioIssue {
  std::string kind;  // parse, schema, reference, units, cadence
  std::string path;  // JSON pointer into the document
  std::string message;
};

class ScenarioError : public std::runtime_error {
public:
  explicit ScenarioError(std::vector<ScenarioIssue> issues);
  const std::vector<ScenarioIssue>& issues() const { return issues_; }

private:
  std::vector<ScenarioIssue> issues_;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

cosim::Scenario parse_scenario_text(std::string_view text);
/// Throws IoError if the file cannot be read, ScenarioError if it is invalid.
cosim::Scenario parse_scenario(const std::filesystem::path& path);

/// Always written in p.u.; parse_scenario_text(serialize_scenario(s)) == s.
std::string serialize_scenario(const cosim::Scenario& s);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double x);

struct RunOverrides {
  std::optional<double> xi;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<double> horizon_min;
  bool no_lem_baseline = false;  // skip the power-flow baseline
};

void apply_overrides(cosim::Scenario& s, const RunOverrides& o);

/// Writes voltages.csv, dlmp.csv, tariffs.csv, gaps.csv, summary.csv and manifest.json.
void write_bundle(const std::filesystem::path& out_dir, const cosim::Scenario& s, const cosim::MarketLog& log,
                  const cosim::Metrics& metrics, const std::string& timestamp);

enum ExitCode : int { kOk = 0, kFailure = 1, kSchema = 2, kHalted = 3, kIo = 4 };

int run_command(const std::filesystem::path& scenario_path, const std::filesystem::path& out_dir,
                const RunOverrides& overrides, std::ostream& log);

}  // namespace lem::io
