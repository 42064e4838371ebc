#include "lem/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"lemsim: two-tier local electricity market simulator"};
  app.require_subcommand(1);

  std::string scenario, out;
  lem::io::RunOverrides o;
  double xi = 0, eps = 0, horizon = 0;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "Run a scenario and write a result bundle");
  run->add_option("scenario", scenario, "Scenario file (JSON)")->required();
  run->add_option("--out", out, "Output directory")->required();
  auto* o_xi = run->add_option("--xi", xi, "Loss/voltage weight");
  auto* o_eps = run->add_option("--epsilon", eps, "Lexicographic degradation tolerance");
  auto* o_seed = run->add_option("--seed", seed, "RNG seed");
  auto* o_hor = run->add_option("--horizon", horizon, "Horizon in minutes");
  run->add_flag("--no-lem-baseline", o.no_lem_baseline, "Skip the power-flow baseline without the market");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : lem::io::kSchema;
  }
  if (*o_xi) o.xi = xi;
  if (*o_eps) o.epsilon = eps;
  if (*o_seed) o.seed = seed;
  if (*o_hor) o.horizon_min = horizon;
  return lem::io::run_command(scenario, out, o, std::cerr);
}
