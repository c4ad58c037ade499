// pgsr: run, sweep, and analyze graph signal recovery scenarios.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgsr/error.hpp"
#include "pgsr/experiments.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::vector<int> parse_values(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) pgsr::raise(pgsr::ErrorCode::Config, "--values: '" + item + "' is not an integer");
    out.push_back(v);
  }
  if (out.empty()) pgsr::raise(pgsr::ErrorCode::Config, "--values is empty");
  return out;
}

void summarize(const pgsr::ScenarioResult& r, const std::string& cell) {
  for (const auto& a : r.algorithms) {
    std::cerr << (cell.empty() ? "" : cell + " ") << a.label << ": trials=" << a.curve.trials;
    if (!a.curve.values.empty()) std::cerr << " final_nmsd=" << a.curve.values.back();
    if (!a.diverged_trials.empty()) std::cerr << " excluded=" << a.diverged_trials.size();
    std::cerr << '\n';
  }
  if (r.rank_deficient_trials > 0) {
    std::cerr << "warning: " << r.rank_deficient_trials
              << " trial(s) had a band-restricted operator of rank < bandwidth\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proportionate-type adaptive graph signal recovery"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  int threads = 1;
  int trials_override = 0;
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for trials")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--trials-override", trials_override, "Replace the configured trial count")
      ->check(CLI::PositiveNumber);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run a scenario and write curves");
  run->add_option("config", config_path, "Scenario TOML file")->required();

  std::string axis_name;
  std::string values_text;
  auto* sw = app.add_subcommand("sweep", "Rerun a scenario over one axis");
  sw->add_option("config", config_path, "Scenario TOML file")->required();
  sw->add_option("--axis", axis_name, "K, M, bandwidth or s_count")->required();
  sw->add_option("--values", values_text, "Comma-separated integers")->required();

  auto* an = app.add_subcommand("analyze", "Print stability and steady-state predictions as JSON");
  an->add_option("config", config_path, "Scenario TOML file")->required();

  // Global options are also accepted after the subcommand.
  for (auto* sub : {run, sw, an}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const pgsr::RunOptions opts{threads, trials_override};
  try {
    const pgsr::ScenarioConfig cfg = pgsr::load_scenario(config_path);

    if (*run) {
      const pgsr::ScenarioResult r = pgsr::run_scenario(cfg, opts);
      pgsr::emit_report({r}, out_dir);
      summarize(r, "");
      return r.all_diverged() ? kExitDiverged : 0;
    }

    if (*sw) {
      const pgsr::SweepAxis axis = pgsr::parse_sweep_axis(axis_name);
      const std::vector<int> values = parse_values(values_text);
      const pgsr::SweepResult s = pgsr::sweep(cfg, axis, values, opts);
      std::vector<std::string> names;
      bool all_diverged = true;
      for (std::size_t i = 0; i < values.size(); ++i) {
        names.push_back(std::string(pgsr::to_string(axis)) + "=" + std::to_string(values[i]));
        summarize(s.cells[i], names.back());
        all_diverged = all_diverged && s.cells[i].all_diverged();
      }
      pgsr::emit_report(s.cells, out_dir, names);
      return all_diverged ? kExitDiverged : 0;
    }

    const auto entries = pgsr::analyze_scenario(cfg, opts);
    std::cout << pgsr::analysis_to_json(cfg, entries);
    return 0;
  } catch (const pgsr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == pgsr::ErrorCode::Config ? kExitConfig : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
