#include "pgsr/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <toml.hpp>

#include "pgsr/error.hpp"
#include "pgsr/graph.hpp"
#include "pgsr/random.hpp"
#include "pgsr/signal.hpp"

namespace pgsr {

using nlohmann::json;

GraphSource parse_graph_source(std::string_view s) {
  if (s == "synthetic-uniform") return GraphSource::SyntheticUniform;
  if (s == "csv") return GraphSource::Csv;
  if (s == "sensor-kernel") return GraphSource::SensorKernel;
  raise(ErrorCode::Config, "unknown graph_source '" + std::string(s) + "'");
}

std::string_view to_string(GraphSource g) noexcept {
  switch (g) {
    case GraphSource::SyntheticUniform: return "synthetic-uniform";
    case GraphSource::Csv: return "csv";
    case GraphSource::SensorKernel: return "sensor-kernel";
  }
  return "?";
}

EstimationSupport parse_estimation_support(std::string_view s) {
  if (s == "full") return EstimationSupport::Full;
  if (s == "band") return EstimationSupport::Band;
  raise(ErrorCode::Config, "unknown estimation_support '" + std::string(s) + "'");
}

std::string_view to_string(EstimationSupport e) noexcept {
  return e == EstimationSupport::Full ? "full" : "band";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "K" || s == "k") return SweepAxis::K;
  if (s == "M" || s == "m") return SweepAxis::M;
  if (s == "bandwidth" || s == "F") return SweepAxis::Bandwidth;
  if (s == "s_count" || s == "S") return SweepAxis::SCount;
  raise(ErrorCode::Config, "unknown sweep axis '" + std::string(s) + "'");
}

std::string_view to_string(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::K: return "K";
    case SweepAxis::M: return "M";
    case SweepAxis::Bandwidth: return "bandwidth";
    case SweepAxis::SCount: return "s_count";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Config parsing. TOML is converted to JSON first so that the manifest echo
// and the TOML file go through one strict reader.

namespace {

json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    json out = json::object();
    for (auto&& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    json out = json::array();
    for (auto&& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  raise(ErrorCode::Config, "unsupported TOML value type (dates and times are not accepted)");
}

class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) raise(ErrorCode::Config, where_ + ": expected a table");
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  std::string str(const char* key, std::string def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_string()) fail(key, "a string");
    return v.get<std::string>();
  }

  double num(const char* key, double def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number()) fail(key, "a number");
    return v.get<double>();
  }

  int integer(const char* key, int def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    const auto x = v.get<long long>();
    if (x < -2147483647LL || x > 2147483647LL) fail(key, "a 32-bit integer");
    return static_cast<int>(x);
  }

  bool boolean(const char* key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(key, "a boolean");
    return v.get<bool>();
  }

  std::uint64_t u64(const char* key) {
    const json& v = raw(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    fail(key, "a non-negative integer");
  }

  std::vector<double> numbers(const char* key) {
    std::vector<double> out;
    if (!has(key)) return out;
    const json& v = raw(key);
    if (!v.is_array()) fail(key, "an array of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) fail(key, "an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) raise(ErrorCode::Config, where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    raise(ErrorCode::Config, where_ + ": '" + key + "' must be " + what);
  }

  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename F>
auto config_enum(F&& parse, const std::string& value, const std::string& key) {
  try {
    return parse(value);
  } catch (const Error& e) {
    raise(ErrorCode::Config, "'" + key + "': " + e.what());
  }
}

AlgorithmSpec read_algorithm(const json& obj, std::size_t index) {
  Reader r(obj, "algorithm[" + std::to_string(index) + "]");
  AlgorithmSpec a;
  if (!r.has("kind")) raise(ErrorCode::Config, "algorithm[" + std::to_string(index) + "]: 'kind' is required");
  a.kind = config_enum(parse_algorithm, r.str("kind", ""), "kind");
  a.label = r.str("name", std::string(to_string(a.kind)));
  FilterConfig& f = a.filter;
  f.mu = r.num("mu", f.mu);
  f.k_history = r.integer("k_history", f.k_history);
  f.gain_rule = config_enum(parse_gain_rule, r.str("gain_rule", std::string(to_string(f.gain_rule))), "gain_rule");
  if (r.has("history_gain")) {
    f.history_gain = config_enum(parse_history_gain, r.str("history_gain", ""), "history_gain");
  } else if (a.kind == Algorithm::PtGelms) {
    f.history_gain = f.gain_rule == GainRule::GmsdOptimal ? HistoryGain::Coupled : HistoryGain::Identity;
  }
  f.rho = r.num("rho", f.rho);
  f.delta = r.num("delta", f.delta);
  f.magnitude = config_enum(parse_magnitude, r.str("magnitude", std::string(to_string(f.magnitude))), "magnitude");
  f.mu_law_beta = r.num("mu_law_beta", f.mu_law_beta);
  f.gain_floor = r.num("gain_floor", f.gain_floor);
  f.gain_cap = r.num("gain_cap", f.gain_cap);
  f.step_cap = r.num("step_cap", f.step_cap);
  f.nonneg_gains = r.boolean("nonneg_gains", f.nonneg_gains);
  f.inner_iters = r.integer("inner_iters", f.inner_iters);
  const std::vector<double> fixed = r.numbers("fixed_gains");
  f.fixed_gains = Eigen::Map<const Vector>(fixed.data(), static_cast<Eigen::Index>(fixed.size()));
  r.finish();
  return a;
}

ScenarioConfig read_scenario(const json& root, const std::filesystem::path& base_dir) {
  Reader r(root, "config");
  ScenarioConfig c;
  c.base_dir = base_dir;
  c.name = r.str("name", "scenario");
  c.graph_source = config_enum(parse_graph_source, r.str("graph_source", "synthetic-uniform"), "graph_source");
  c.graph_csv = r.str("graph_csv", "");
  c.graph_format = r.str("graph_format", c.graph_format);
  c.coords_csv = r.str("coords_csv", "");
  c.sensor_csv = r.str("sensor_csv", "");
  SensorColumns& sc = c.sensor_columns;
  sc.epoch = r.integer("sensor_epoch_column", sc.epoch);
  sc.sensor = r.integer("sensor_id_column", sc.sensor);
  sc.value = r.integer("sensor_value_column", sc.value);
  sc.id_offset = r.integer("sensor_id_offset", sc.id_offset);
  const std::string delim = r.str("sensor_delimiter", "comma");
  if (delim == "comma") {
    sc.delimiter = ',';
  } else if (delim == "whitespace") {
    sc.delimiter = ' ';
  } else {
    raise(ErrorCode::Config, "'sensor_delimiter' must be 'comma' or 'whitespace'");
  }
  sc.has_header = r.boolean("sensor_has_header", sc.has_header);
  sc.skip_unknown = r.boolean("sensor_skip_unknown", sc.skip_unknown);
  c.time_slot = r.integer("time_slot", c.time_slot);
  c.kernel_theta = r.num("kernel_theta", c.kernel_theta);
  c.kernel_kappa = r.num("kernel_kappa", c.kernel_kappa);

  c.n_nodes = r.integer("n_nodes", 0);
  c.bandwidth = r.integer("bandwidth", 0);
  c.m_measurements = r.integer("m_measurements", 0);
  c.s_count = r.integer("s_count", 0);
  c.noise_variance = r.num("noise_variance", 0.0);
  c.noise_variances = r.numbers("noise_variances");
  c.signal_sigma = r.num("signal_sigma", c.signal_sigma);

  c.trials = r.integer("trials", c.trials);
  c.horizon = r.integer("horizon", c.horizon);
  if (!r.has("seed")) raise(ErrorCode::Config, "'seed' is mandatory");
  c.seed = r.u64("seed");
  c.sampling_policy = config_enum(parse_sampling_policy, r.str("sampling_policy", "static"), "sampling_policy");
  c.estimation_support =
      config_enum(parse_estimation_support, r.str("estimation_support", "full"), "estimation_support");
  c.identity_sensing = r.boolean("identity_sensing", c.identity_sensing);
  c.record_gmsd = r.boolean("record_gmsd", c.record_gmsd);
  c.trace = r.boolean("trace", c.trace);

  if (r.has("algorithm")) {
    const json& algs = r.raw("algorithm");
    if (!algs.is_array()) raise(ErrorCode::Config, "'algorithm' must be an array of tables");
    for (std::size_t i = 0; i < algs.size(); ++i) c.algorithms.push_back(read_algorithm(algs[i], i));
  }
  r.finish();
  c.validate();
  return c;
}

bool safe_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) {
    return std::isalnum(ch) || ch == '_' || ch == '-' || ch == '.' || ch == '=';
  });
}

void require_file(const ScenarioConfig& c, const std::string& key, const std::string& value) {
  if (value.empty()) raise(ErrorCode::Config, "'" + key + "' is required for graph_source '" +
                                                 std::string(to_string(c.graph_source)) + "'");
  if (!std::filesystem::exists(c.resolve(value))) {
    raise(ErrorCode::Config, "'" + key + "' file not found: " + c.resolve(value).string());
  }
}

}  // namespace

std::filesystem::path ScenarioConfig::resolve(const std::string& file) const {
  const std::filesystem::path p(file);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

Vector ScenarioConfig::noise_variance_vector() const {
  if (!noise_variances.empty()) {
    return Eigen::Map<const Vector>(noise_variances.data(), static_cast<Eigen::Index>(noise_variances.size()));
  }
  return Vector::Constant(m_measurements, noise_variance);
}

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& m) { raise(ErrorCode::Config, m); };
  if (!safe_name(name)) bad("'name' must be non-empty and use only [A-Za-z0-9_.=-]");
  if (n_nodes < 1) bad("'n_nodes' must be >= 1");
  auto in_range = [&](int v, const char* key) {
    if (v < 1 || v > n_nodes) bad(std::string("'") + key + "' must lie in [1, n_nodes] (got " + std::to_string(v) + ")");
  };
  in_range(bandwidth, "bandwidth");
  in_range(m_measurements, "m_measurements");
  in_range(s_count, "s_count");
  if (identity_sensing && m_measurements != n_nodes) bad("'identity_sensing' requires m_measurements == n_nodes");
  if (trials < 1) bad("'trials' must be >= 1");
  if (horizon < 1) bad("'horizon' must be >= 1");
  if (!(noise_variance >= 0.0)) bad("'noise_variance' must be >= 0");
  if (!noise_variances.empty()) {
    if (static_cast<int>(noise_variances.size()) != m_measurements) bad("'noise_variances' must have m_measurements entries");
    for (double v : noise_variances)
      if (!(v >= 0.0)) bad("'noise_variances' entries must be >= 0");
  }
  if (!(signal_sigma > 0.0)) bad("'signal_sigma' must be > 0");
  if (time_slot < 0) bad("'time_slot' must be >= 0");
  if (graph_format != "edge_list" && graph_format != "dense") bad("'graph_format' must be 'edge_list' or 'dense'");

  switch (graph_source) {
    case GraphSource::SyntheticUniform:
      if (!sensor_csv.empty()) bad("'sensor_csv' needs a fixed graph (csv or sensor-kernel)");
      break;
    case GraphSource::Csv: require_file(*this, "graph_csv", graph_csv); break;
    case GraphSource::SensorKernel: require_file(*this, "coords_csv", coords_csv); break;
  }
  if (!sensor_csv.empty() && !std::filesystem::exists(resolve(sensor_csv))) {
    bad("'sensor_csv' file not found: " + resolve(sensor_csv).string());
  }

  if (algorithms.empty()) bad("at least one [[algorithm]] is required");
  std::set<std::string> labels;
  for (const auto& a : algorithms) {
    if (!safe_name(a.label)) bad("algorithm name '" + a.label + "' must use only [A-Za-z0-9_.=-]");
    if (!labels.insert(a.label).second) bad("duplicate algorithm name '" + a.label + "'");
    try {
      a.filter.validate();
    } catch (const Error& e) {
      bad("algorithm '" + a.label + "': " + e.what());
    }
    if (!(a.filter.mu > 0.0)) bad("algorithm '" + a.label + "': mu must be > 0");
  }
}

ScenarioConfig parse_scenario_toml(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table tbl;
  try {
    tbl = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    raise(ErrorCode::Config, os.str());
  }
  return read_scenario(toml_to_json(tbl), base_dir);
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_toml(ss.str(), path.parent_path());
}

namespace {

json algorithm_json(const AlgorithmSpec& a) {
  const FilterConfig& f = a.filter;
  return json{{"name", a.label},
              {"kind", std::string(to_string(a.kind))},
              {"mu", f.mu},
              {"k_history", f.k_history},
              {"gain_rule", std::string(to_string(f.gain_rule))},
              {"history_gain", std::string(to_string(f.history_gain))},
              {"rho", f.rho},
              {"delta", f.delta},
              {"magnitude", std::string(to_string(f.magnitude))},
              {"mu_law_beta", f.mu_law_beta},
              {"gain_floor", f.gain_floor},
              {"gain_cap", f.gain_cap},
              {"step_cap", f.step_cap},
              {"nonneg_gains", f.nonneg_gains},
              {"inner_iters", f.inner_iters},
              {"fixed_gains", std::vector<double>(f.fixed_gains.data(), f.fixed_gains.data() + f.fixed_gains.size())}};
}

json config_json(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["graph_source"] = std::string(to_string(c.graph_source));
  j["graph_csv"] = c.graph_csv;
  j["graph_format"] = c.graph_format;
  j["coords_csv"] = c.coords_csv;
  j["sensor_csv"] = c.sensor_csv;
  j["sensor_epoch_column"] = c.sensor_columns.epoch;
  j["sensor_id_column"] = c.sensor_columns.sensor;
  j["sensor_value_column"] = c.sensor_columns.value;
  j["sensor_id_offset"] = c.sensor_columns.id_offset;
  j["sensor_delimiter"] = c.sensor_columns.delimiter == ',' ? "comma" : "whitespace";
  j["sensor_has_header"] = c.sensor_columns.has_header;
  j["sensor_skip_unknown"] = c.sensor_columns.skip_unknown;
  j["time_slot"] = c.time_slot;
  j["kernel_theta"] = c.kernel_theta;
  j["kernel_kappa"] = c.kernel_kappa;
  j["n_nodes"] = c.n_nodes;
  j["bandwidth"] = c.bandwidth;
  j["m_measurements"] = c.m_measurements;
  j["s_count"] = c.s_count;
  j["noise_variance"] = c.noise_variance;
  j["noise_variances"] = c.noise_variances;
  j["signal_sigma"] = c.signal_sigma;
  j["trials"] = c.trials;
  j["horizon"] = c.horizon;
  j["seed"] = c.seed;
  j["sampling_policy"] = std::string(to_string(c.sampling_policy));
  j["estimation_support"] = std::string(to_string(c.estimation_support));
  j["identity_sensing"] = c.identity_sensing;
  j["record_gmsd"] = c.record_gmsd;
  j["trace"] = c.trace;
  json algs = json::array();
  for (const auto& a : c.algorithms) algs.push_back(algorithm_json(a));
  j["algorithm"] = std::move(algs);
  return j;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace

std::string config_to_json(const ScenarioConfig& cfg) { return config_json(cfg).dump(); }

ScenarioConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(ErrorCode::Config, std::string("JSON parse error: ") + e.what());
  }
  return read_scenario(j, base_dir);
}

std::uint64_t config_hash(const ScenarioConfig& cfg) { return fnv1a64(config_to_json(cfg)); }

// ---------------------------------------------------------------------------
// Runner

namespace {

// Inputs that do not change between trials.
struct SharedInputs {
  GftBasis full;
  std::shared_ptr<const Matrix> basis;
  std::optional<GroundTruth> truth;
  int imputed = 0;
};

SharedInputs load_shared(const ScenarioConfig& cfg) {
  SharedInputs s;
  if (cfg.graph_source == GraphSource::SyntheticUniform) return s;
  WeightedGraph graph = [&] {
    if (cfg.graph_source == GraphSource::Csv) {
      if (cfg.graph_format == "dense") return build_graph(load_dense_matrix_csv(cfg.resolve(cfg.graph_csv)));
      return load_edge_list_csv(cfg.resolve(cfg.graph_csv), cfg.n_nodes);
    }
    const Matrix coords = load_coords_csv(cfg.resolve(cfg.coords_csv), cfg.n_nodes, cfg.sensor_columns.id_offset);
    return build_sensor_graph(coords, KernelGraphOptions{cfg.kernel_theta, cfg.kernel_kappa, true});
  }();
  if (graph.n_nodes() != cfg.n_nodes) {
    raise(ErrorCode::Config, "graph has " + std::to_string(graph.n_nodes()) + " nodes, n_nodes is " +
                                 std::to_string(cfg.n_nodes));
  }
  s.full = gft_basis(laplacian(graph));
  const GftBasis& basis = s.full;
  s.basis = std::make_shared<const Matrix>(basis.eigenvectors);
  if (!cfg.sensor_csv.empty()) {
    SensorData data = load_sensor_csv(cfg.resolve(cfg.sensor_csv), cfg.n_nodes, cfg.sensor_columns);
    impute_missing(data, graph);
    if (cfg.time_slot >= static_cast<int>(data.slots.size())) {
      raise(ErrorCode::Config, "'time_slot' " + std::to_string(cfg.time_slot) + " but the file has " +
                                   std::to_string(data.slots.size()) + " slots");
    }
    const SensorSlot& slot = data.slots[static_cast<std::size_t>(cfg.time_slot)];
    s.truth = truth_from_signal(basis, slot.values);
    for (char c : slot.imputed) s.imputed += c ? 1 : 0;
  }
  return s;
}

bool uses_noise_cov(const AlgorithmSpec& a) {
  const FilterConfig c = canonical_config(a.kind, a.filter);
  return c.gain_rule == GainRule::GmsdOptimal;
}

struct AlgTrial {
  std::vector<double> nmsd;
  std::vector<double> gmsd;
  bool diverged = false;
  Vector g_sum;
  Vector h_sum;
  int steps = 0;
  std::vector<TraceRow> trace;
};

struct TrialOutcome {
  std::vector<AlgTrial> algs;
  bool rank_deficient = false;
  // Trial-0 operators for the analysis snapshot: A[0], A[1], ...
  std::vector<Matrix> ops;
  Matrix noise_cov;
};

int max_history(const ScenarioConfig& cfg) {
  int k = 1;
  for (const auto& a : cfg.algorithms) k = std::max(k, canonical_config(a.kind, a.filter).k_history);
  return k;
}

TrialOutcome run_trial(const ScenarioConfig& cfg, const SharedInputs& shared, int t) {
  const std::uint64_t ts = trial_seed(cfg.seed, static_cast<std::uint64_t>(t));
  const int n_nodes = cfg.n_nodes;

  std::shared_ptr<const Matrix> basis_ptr = shared.basis;
  GroundTruth truth;
  if (!basis_ptr) {
    const WeightedGraph g = random_uniform_graph(n_nodes, stream_seed(ts, "graph"));
    const GftBasis basis = gft_basis(laplacian(g));
    basis_ptr = std::make_shared<const Matrix>(basis.eigenvectors);
    truth = synth_bandlimited(basis, cfg.bandwidth, stream_seed(ts, "signal"), cfg.signal_sigma);
  } else if (shared.truth) {
    truth = *shared.truth;
  } else {
    truth = synth_bandlimited(shared.full, cfg.bandwidth, stream_seed(ts, "signal"), cfg.signal_sigma);
  }

  OperatorOptions oo;
  oo.policy = cfg.sampling_policy;
  oo.identity_sensing = cfg.identity_sensing;
  const SamplingOperator op0 = make_operator(basis_ptr, cfg.m_measurements, cfg.s_count, stream_seed(ts, "operator"), oo);
  const NoiseModel noise{cfg.noise_variance_vector(), stream_seed(ts, "noise")};

  TrialOutcome out;
  out.rank_deficient = op0.band_rank(cfg.bandwidth) < cfg.bandwidth;

  const bool band = cfg.estimation_support == EstimationSupport::Band;
  const int width = band ? cfg.bandwidth : n_nodes;
  const Vector s_true_w = truth.s_true.head(width);

  std::vector<Filter> filters;
  filters.reserve(cfg.algorithms.size());
  for (const auto& spec : cfg.algorithms) {
    FilterConfig fc = spec.filter;
    if (uses_noise_cov(spec)) fc.noise_cov = noise.covariance();
    filters.emplace_back(spec.kind, fc, width);
  }
  out.algs.resize(cfg.algorithms.size());
  for (auto& a : out.algs) {
    a.nmsd.reserve(static_cast<std::size_t>(cfg.horizon));
    a.g_sum = Vector::Zero(width);
    a.h_sum = Vector::Zero(width);
  }

  if (t == 0) {
    const int k = max_history(cfg);
    for (int j = 0; j < k; ++j) {
      const SamplingOperator opj = resample(op0, j);
      out.ops.push_back(band ? Matrix(opj.composite().leftCols(width)) : opj.composite());
    }
    out.noise_cov = noise.covariance();
  }

  Vector padded = Vector::Zero(n_nodes);
  const bool per_iter = cfg.sampling_policy == SamplingPolicy::PerIteration;
  for (int n = 0; n < cfg.horizon; ++n) {
    const bool last = n + 1 == cfg.horizon;
    std::optional<SamplingOperator> opn;
    if (per_iter && !last) opn = resample(op0, n);
    const SamplingOperator& op = opn ? *opn : op0;
    Vector y;
    Matrix a_band;
    if (!last) {
      y = observe(op, truth.s_true, noise, n);
      if (band) a_band = op.composite().leftCols(width);
    }
    const Matrix& a = band ? a_band : op.composite();

    for (std::size_t k = 0; k < filters.size(); ++k) {
      AlgTrial& rec = out.algs[k];
      if (rec.diverged) continue;
      const FilterState& st = filters[k].state();
      padded.head(width) = st.s_est;
      const double e = nmsd(truth.s_true, padded);
      rec.nmsd.push_back(e);
      if (cfg.trace) {
        rec.trace.push_back(TraceRow{t, n, e, st.g_diag.minCoeff(), st.g_diag.maxCoeff(), st.g_diag.mean()});
      }
      if (last) continue;
      Vector before;
      if (cfg.record_gmsd) before = st.s_est;
      try {
        filters[k].update(a, y);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::NonFiniteState) throw;
        rec.diverged = true;
        continue;
      }
      const FilterState& after = filters[k].state();
      if (cfg.record_gmsd) rec.gmsd.push_back(gmsd_empirical(s_true_w, before, after.s_est, a));
      rec.g_sum += after.g_diag;
      rec.h_sum += after.h_diag;
      ++rec.steps;
    }
  }
  return out;
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct RunContext {
  ScenarioResult result;
  std::vector<Matrix> ops;
  Matrix noise_cov;
};

std::vector<Matrix> history_for(const std::vector<Matrix>& ops, int k) {
  std::vector<Matrix> h;
  for (int j = 1; j < k && j < static_cast<int>(ops.size()); ++j) h.push_back(ops[static_cast<std::size_t>(j)]);
  return h;
}

RunContext run_impl(const ScenarioConfig& base, const RunOptions& opts) {
  ScenarioConfig cfg = base;
  if (opts.trials_override > 0) cfg.trials = opts.trials_override;
  cfg.validate();

  const SharedInputs shared = load_shared(cfg);
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(cfg.trials));
  parallel_for(cfg.trials, opts.threads,
               [&](int t) { outcomes[static_cast<std::size_t>(t)] = run_trial(cfg, shared, t); });

  RunContext ctx;
  ScenarioResult& res = ctx.result;
  res.config = cfg;
  res.hash = config_hash(cfg);
  res.imputed_readings = shared.imputed;
  for (int t = 0; t < cfg.trials; ++t) res.trial_seeds.push_back(trial_seed(cfg.seed, static_cast<std::uint64_t>(t)));
  for (const auto& o : outcomes) res.rank_deficient_trials += o.rank_deficient ? 1 : 0;
  ctx.ops = outcomes.front().ops;
  ctx.noise_cov = outcomes.front().noise_cov;

  for (std::size_t k = 0; k < cfg.algorithms.size(); ++k) {
    const AlgorithmSpec& spec = cfg.algorithms[k];
    AlgorithmResult ar;
    ar.label = spec.label;
    ar.kind = spec.kind;
    std::vector<std::vector<double>> curves;
    std::vector<std::vector<double>> gmsd_curves;
    for (int t = 0; t < cfg.trials; ++t) {
      AlgTrial& rec = outcomes[static_cast<std::size_t>(t)].algs[k];
      if (rec.diverged) {
        ar.diverged_trials.push_back(t);
      } else {
        curves.push_back(std::move(rec.nmsd));
        if (cfg.record_gmsd) gmsd_curves.push_back(std::move(rec.gmsd));
      }
      if (cfg.trace) {
        ar.trace.insert(ar.trace.end(), rec.trace.begin(), rec.trace.end());
      }
    }
    if (!curves.empty()) {
      ar.curve = ensemble_mean(curves);
      if (cfg.record_gmsd) ar.gmsd = ensemble_mean(gmsd_curves);
    }
    ar.curve.algorithm = spec.label;
    ar.curve.scenario_hash = res.hash;
    ar.curve.trials = static_cast<int>(curves.size());

    const AlgTrial& first = outcomes.front().algs[k];
    const int steps = std::max(1, first.steps);
    ar.mean_g = first.steps > 0 ? Vector(first.g_sum / steps) : Vector::Ones(first.g_sum.size());
    ar.mean_h = first.h_sum / steps;

    const FilterConfig canon = canonical_config(spec.kind, spec.filter);
    try {
      const Matrix b1 = build_b1(ar.mean_g, ar.mean_h, ctx.ops.front(), history_for(ctx.ops, canon.k_history));
      ar.stability = stability_bound(b1, spec.filter.mu);
    } catch (const Error& e) {
      ar.stability_note = e.what();
    }
    res.algorithms.push_back(std::move(ar));
  }
  return ctx;
}

}  // namespace

bool ScenarioResult::all_diverged() const {
  if (algorithms.empty()) return false;
  for (const auto& a : algorithms)
    if (static_cast<int>(a.diverged_trials.size()) < config.trials) return false;
  return true;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
  return run_impl(cfg, opts).result;
}

ScenarioConfig apply_axis(const ScenarioConfig& cfg, SweepAxis axis, int value) {
  ScenarioConfig c = cfg;
  switch (axis) {
    case SweepAxis::K:
      for (auto& a : c.algorithms)
        if (a.kind == Algorithm::PtGelms || a.kind == Algorithm::Elms) a.filter.k_history = value;
      break;
    case SweepAxis::M:
      c.m_measurements = value;
      if (!c.noise_variances.empty()) {
        raise(ErrorCode::Config, "an M sweep needs a scalar noise_variance, not noise_variances");
      }
      break;
    case SweepAxis::Bandwidth: c.bandwidth = value; break;
    case SweepAxis::SCount: c.s_count = value; break;
  }
  return c;
}

SweepResult sweep(const ScenarioConfig& cfg, SweepAxis axis, const std::vector<int>& values,
                  const RunOptions& opts) {
  SweepResult r;
  r.axis = axis;
  r.values = values;
  for (int v : values) r.cells.push_back(run_scenario(apply_axis(cfg, axis, v), opts));
  return r;
}

std::vector<AnalysisEntry> analyze_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
  RunOptions pilot = opts;
  pilot.trials_override = 1;
  const RunContext ctx = run_impl(cfg, pilot);
  std::vector<AnalysisEntry> out;
  for (std::size_t k = 0; k < ctx.result.algorithms.size(); ++k) {
    const AlgorithmResult& ar = ctx.result.algorithms[k];
    const AlgorithmSpec& spec = ctx.result.config.algorithms[k];
    AnalysisEntry e;
    e.label = ar.label;
    e.stability = ar.stability;
    e.note = ar.stability_note;
    if (cfg.sampling_policy != SamplingPolicy::Static) {
      e.note = "steady-state prediction needs the static sampling policy";
    } else if (e.stability) {
      const FilterConfig canon = canonical_config(spec.kind, spec.filter);
      try {
        e.predicted_msd = steady_state_msd(ar.mean_g, ar.mean_h, ctx.ops.front(), history_for(ctx.ops, canon.k_history),
                                           ctx.noise_cov, spec.filter.mu)
                              .msd;
      } catch (const Error& err) {
        e.note = err.what();
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

json stability_json(const std::optional<StabilityReport>& s) {
  if (!s) return nullptr;
  return json{{"lambda_max", s->lambda_max},
              {"mu", s->mu},
              {"mu_bound", s->mu_bound},
              {"spectral_radius", s->mean_spectral_radius},
              {"mu_within_bound", s->mu_within_bound},
              {"mean_stable", s->mean_stable},
              {"b1_symmetric", s->b1_symmetric}};
}

}  // namespace

std::string analysis_to_json(const ScenarioConfig& cfg, const std::vector<AnalysisEntry>& entries) {
  json algs = json::array();
  for (const auto& e : entries) {
    json j;
    j["algorithm"] = e.label;
    if (e.stability) {
      j["lambda_max"] = e.stability->lambda_max;
      j["mu_bound"] = e.stability->mu_bound;
      j["spectral_radius"] = e.stability->mean_spectral_radius;
      j["mu"] = e.stability->mu;
      j["mu_within_bound"] = e.stability->mu_within_bound;
    } else {
      j["lambda_max"] = nullptr;
      j["mu_bound"] = nullptr;
      j["spectral_radius"] = nullptr;
    }
    j["predicted_msd"] = e.predicted_msd ? json(*e.predicted_msd) : json(nullptr);
    if (!e.note.empty()) j["note"] = e.note;
    algs.push_back(std::move(j));
  }
  json root{{"scenario", cfg.name}, {"config_hash", hex64(config_hash(cfg))}, {"algorithms", algs}};
  return root.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const std::vector<ScenarioResult>& results,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<std::string>& cell_names) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  const bool nested = results.size() > 1 || !cell_names.empty();
  json cells = json::array();
  std::ostringstream long_csv;
  long_csv << "cell,algorithm,iter,mean_nmsd,stderr\n";

  for (std::size_t c = 0; c < results.size(); ++c) {
    const ScenarioResult& r = results[c];
    const std::string cell = c < cell_names.size() ? cell_names[c] : (nested ? "cell" + std::to_string(c) : r.config.name);
    const fs::path dir = nested ? out_dir / cell : out_dir;
    fs::create_directories(dir, ec);
    if (ec) raise(ErrorCode::Io, "cannot create " + dir.string());

    json algs = json::array();
    for (const auto& a : r.algorithms) {
      const fs::path curve_path = dir / (a.label + ".csv");
      write_curve_csv(a.curve, curve_path);
      written.push_back(curve_path);
      json aj{{"name", a.label},
              {"kind", std::string(to_string(a.kind))},
              {"curve_file", fs::relative(curve_path, out_dir).generic_string()},
              {"trials_used", a.curve.trials},
              {"excluded_trials", a.diverged_trials.size()},
              {"diverged_trials", a.diverged_trials},
              {"final_nmsd", a.curve.values.empty() ? json(nullptr) : json(a.curve.values.back())},
              {"stability", stability_json(a.stability)}};
      if (!a.stability_note.empty()) aj["stability_note"] = a.stability_note;
      if (a.gmsd) {
        NmsdCurve g = *a.gmsd;
        const fs::path gp = dir / (a.label + "_gmsd.csv");
        std::ofstream out(gp, std::ios::binary);
        if (!out) raise(ErrorCode::Io, "cannot write " + gp.string());
        out << "iter,mean_gmsd,stderr\n";
        for (std::size_t t = 0; t < g.values.size(); ++t)
          out << t << ',' << format_double(g.values[t]) << ',' << format_double(g.stderr_values[t]) << '\n';
        written.push_back(gp);
        aj["gmsd_file"] = fs::relative(gp, out_dir).generic_string();
      }
      algs.push_back(std::move(aj));
      for (std::size_t t = 0; t < a.curve.values.size(); ++t) {
        long_csv << cell << ',' << a.label << ',' << t << ',' << format_double(a.curve.values[t]) << ','
                 << format_double(a.curve.stderr_values[t]) << '\n';
      }
    }

    if (r.config.trace) {
      const fs::path tp = dir / "trace.csv";
      std::ofstream out(tp, std::ios::binary);
      if (!out) raise(ErrorCode::Io, "cannot write " + tp.string());
      out << "trial,n,algorithm,nmsd,min_gain,max_gain,mean_gain\n";
      for (const auto& a : r.algorithms) {
        for (const auto& row : a.trace) {
          out << row.trial << ',' << row.n << ',' << a.label << ',' << format_double(row.nmsd) << ','
              << format_double(row.min_gain) << ',' << format_double(row.max_gain) << ','
              << format_double(row.mean_gain) << '\n';
        }
      }
      written.push_back(tp);
    }

    std::vector<std::string> seeds;
    for (auto s : r.trial_seeds) seeds.push_back(hex64(s));
    cells.push_back(json{{"cell", cell},
                         {"config", config_json(r.config)},
                         {"config_hash", hex64(r.hash)},
                         {"master_seed", r.config.seed},
                         {"trial_seeds", seeds},
                         {"rank_deficient_trials", r.rank_deficient_trials},
                         {"imputed_readings", r.imputed_readings},
                         {"all_diverged", r.all_diverged()},
                         {"algorithms", algs}});
  }

  if (!results.empty()) {
    const fs::path lp = out_dir / "curves_long.csv";
    std::ofstream out(lp, std::ios::binary);
    if (!out) raise(ErrorCode::Io, "cannot write " + lp.string());
    out << long_csv.str();
    written.push_back(lp);
  }

  json manifest;
  manifest["format"] = "pgsr-report-1";
  manifest["cells"] = cells;
  json files = json::array();
  for (const auto& p : written) files.push_back(fs::relative(p, out_dir).generic_string());
  manifest["files"] = files;
  const fs::path mp = out_dir / "manifest.json";
  std::ofstream out(mp, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot write " + mp.string());
  out << manifest.dump(2) << '\n';
  written.push_back(mp);
  return written;
}

}  // namespace pgsr
