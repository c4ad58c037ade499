#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgsr/analysis.hpp"
#include "pgsr/filters.hpp"
#include "pgsr/metrics.hpp"
#include "pgsr/sampling.hpp"
#include "pgsr/signal.hpp"

namespace pgsr {

enum class GraphSource { SyntheticUniform, Csv, SensorKernel };
GraphSource parse_graph_source(std::string_view s);
std::string_view to_string(GraphSource g) noexcept;

/// `full`: the filter estimates all N GFT coefficients. `band`: the filter
/// only sees the first |F| columns of A and estimates |F| coefficients.
enum class EstimationSupport { Full, Band };
EstimationSupport parse_estimation_support(std::string_view s);
std::string_view to_string(EstimationSupport e) noexcept;

struct AlgorithmSpec {
  std::string label;
  Algorithm kind = Algorithm::Glms;
  FilterConfig filter;
};

struct ScenarioConfig {
  std::string name;
  GraphSource graph_source = GraphSource::SyntheticUniform;
  std::string graph_csv;
  /// `edge_list` or `dense`.
  std::string graph_format = "edge_list";
  std::string coords_csv;
  std::string sensor_csv;
  SensorColumns sensor_columns;
  int time_slot = 0;
  double kernel_theta = 0.0;
  double kernel_kappa = 0.0;

  int n_nodes = 0;
  int bandwidth = 0;
  int m_measurements = 0;
  int s_count = 0;
  double noise_variance = 0.0;
  /// Per-measurement variances; overrides noise_variance when non-empty.
  std::vector<double> noise_variances;
  double signal_sigma = 1.0;

  int trials = 1;
  int horizon = 1;
  std::uint64_t seed = 0;
  SamplingPolicy sampling_policy = SamplingPolicy::Static;
  EstimationSupport estimation_support = EstimationSupport::Full;
  bool identity_sensing = false;

  /// Also record the per-step empirical GMSD next to NMSD.
  bool record_gmsd = false;
  /// Write per-trial gain statistics in a long trace CSV.
  bool trace = false;

  std::vector<AlgorithmSpec> algorithms;

  /// Directory relative file names are resolved against; not part of the hash.
  std::filesystem::path base_dir;

  /// Throws Config on any bad value or missing file.
  void validate() const;
  std::filesystem::path resolve(const std::string& file) const;
  Vector noise_variance_vector() const;
};

/// Throws Config for unknown keys, wrong types, and missing `seed`.
ScenarioConfig parse_scenario_toml(std::string_view text, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Canonical JSON text of every config field (sorted keys). The content hash
/// is fnv1a64 of this text.
std::string config_to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(std::string_view json, const std::filesystem::path& base_dir = {});
std::uint64_t config_hash(const ScenarioConfig& cfg);

struct RunOptions {
  int threads = 1;
  /// > 0 replaces cfg.trials.
  int trials_override = 0;
};

struct TraceRow {
  int trial = 0;
  int n = 0;
  double nmsd = 0.0;
  double min_gain = 0.0;
  double max_gain = 0.0;
  double mean_gain = 0.0;
};

struct AlgorithmResult {
  std::string label;
  Algorithm kind = Algorithm::Glms;
  NmsdCurve curve;
  std::optional<NmsdCurve> gmsd;
  std::vector<int> diverged_trials;
  std::optional<StabilityReport> stability;
  std::string stability_note;
  /// Time-averaged gains of the first trial, used as the analysis snapshot.
  Vector mean_g;
  Vector mean_h;
  std::vector<TraceRow> trace;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::uint64_t hash = 0;
  std::vector<std::uint64_t> trial_seeds;
  std::vector<AlgorithmResult> algorithms;
  /// Trials whose band-restricted operator had rank below |F|.
  int rank_deficient_trials = 0;
  int imputed_readings = 0;
  bool all_diverged() const;
};

ScenarioResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});

enum class SweepAxis { K, M, Bandwidth, SCount };
SweepAxis parse_sweep_axis(std::string_view s);
std::string_view to_string(SweepAxis a) noexcept;

/// Copy of `cfg` with the axis set to `value`. K only touches algorithms
/// that reuse history.
ScenarioConfig apply_axis(const ScenarioConfig& cfg, SweepAxis axis, int value);

struct SweepResult {
  SweepAxis axis = SweepAxis::K;
  std::vector<int> values;
  std::vector<ScenarioResult> cells;
};

SweepResult sweep(const ScenarioConfig& cfg, SweepAxis axis, const std::vector<int>& values,
                  const RunOptions& opts = {});

struct AnalysisEntry {
  std::string label;
  std::optional<StabilityReport> stability;
  std::optional<double> predicted_msd;
  std::string note;
};

/// Gain snapshot from a one-trial pilot run, then stability and steady-state
/// predictions on trial 0's operator.
std::vector<AnalysisEntry> analyze_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});
std::string analysis_to_json(const ScenarioConfig& cfg, const std::vector<AnalysisEntry>& entries);

/// Writes `<label>.csv` per algorithm (plus `<label>_gmsd.csv` and
/// `trace.csv` when recorded), `curves_long.csv`, and `manifest.json`.
/// Returns the files written, manifest last.
std::vector<std::filesystem::path> emit_report(const std::vector<ScenarioResult>& results,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<std::string>& cell_names = {});

}  // namespace pgsr
