#include "pgsr/signal.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "pgsr/error.hpp"
#include "pgsr/random.hpp"

namespace pgsr {

GroundTruth synth_bandlimited(const GftBasis& basis, int bandwidth, std::uint64_t seed,
                              double sigma) {
  const int n = basis.size();
  if (bandwidth < 1 || bandwidth > n) raise(ErrorCode::OutOfRange, "bandwidth must lie in [1, N]");
  if (!(sigma > 0.0)) raise(ErrorCode::OutOfRange, "signal sigma must be positive");
  Stream rng(seed);
  GroundTruth t;
  t.bandwidth = bandwidth;
  t.s_true = Vector::Zero(n);
  for (int k = 0; k < bandwidth; ++k) t.s_true[k] = rng.gaussian(0.0, sigma);
  t.x_true = igft(basis, t.s_true);
  return t;
}

GroundTruth truth_from_signal(const GftBasis& basis, const Vector& x) {
  GroundTruth t;
  t.s_true = gft(basis, x);
  t.x_true = x;
  t.bandwidth = basis.size();
  return t;
}

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) out.push_back(f);
  } else {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, delim)) out.push_back(f);
  }
  return out;
}

bool blank(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

SensorData load_sensor_csv(const std::filesystem::path& path, int n_nodes,
                           const SensorColumns& columns) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  if (n_nodes < 1) raise(ErrorCode::OutOfRange, "n_nodes must be positive");
  const int needed = std::max({columns.epoch, columns.sensor, columns.value}) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::map<long long, Vector> slots;
  std::map<long long, int> rows_per_slot;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (columns.has_header && lineno == 1) continue;
    const auto f = split(line, columns.delimiter);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (static_cast<int>(f.size()) < needed) raise(ErrorCode::Parse, where + ": too few columns");
    long long epoch = 0;
    long long raw_id = 0;
    try {
      epoch = std::stoll(f[columns.epoch]);
      raw_id = std::stoll(f[columns.sensor]);
    } catch (const std::exception&) {
      raise(ErrorCode::Parse, where + ": bad epoch or sensor id");
    }
    const long long idx = raw_id - columns.id_offset;
    if (idx < 0 || idx >= n_nodes) {
      if (columns.skip_unknown) continue;
      raise(ErrorCode::UnknownSensor, where + ": sensor id " + std::to_string(raw_id));
    }
    auto [it, inserted] = slots.try_emplace(epoch, Vector::Constant(n_nodes, nan));
    it->second[idx] = to_double(f[columns.value]);
    ++rows_per_slot[epoch];
  }

  SensorData data;
  data.n_nodes = n_nodes;
  for (auto& [epoch, values] : slots) {
    if (!values.array().isFinite().any()) {
      raise(ErrorCode::EmptySlot, "epoch " + std::to_string(epoch) + " has no finite reading");
    }
    SensorSlot slot;
    slot.epoch = epoch;
    slot.values = std::move(values);
    slot.imputed.assign(n_nodes, 0);
    data.slots.push_back(std::move(slot));
  }
  return data;
}

void impute_missing(SensorData& data, const WeightedGraph& graph) {
  if (graph.n_nodes() != data.n_nodes) raise(ErrorCode::DimensionMismatch, "imputation graph size");
  const Matrix& w = graph.weights();
  for (auto& slot : data.slots) {
    const Vector& v = slot.values;
    double slot_sum = 0.0;
    int slot_cnt = 0;
    for (int i = 0; i < data.n_nodes; ++i) {
      if (std::isfinite(v[i])) {
        slot_sum += v[i];
        ++slot_cnt;
      }
    }
    Vector filled = v;
    for (int i = 0; i < data.n_nodes; ++i) {
      if (std::isfinite(v[i])) continue;
      double sum = 0.0;
      int cnt = 0;
      for (int j = 0; j < data.n_nodes; ++j) {
        if (j != i && w(i, j) > 0.0 && std::isfinite(v[j])) {
          sum += v[j];
          ++cnt;
        }
      }
      filled[i] = cnt > 0 ? sum / cnt : slot_sum / slot_cnt;
      slot.imputed[i] = 1;
      ++data.imputed_count;
    }
    slot.values = std::move(filled);
  }
}

void write_sensor_csv(const SensorData& data, const std::filesystem::path& path, int id_offset) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out.precision(17);
  for (const auto& slot : data.slots) {
    for (int i = 0; i < data.n_nodes; ++i) {
      if (!std::isfinite(slot.values[i])) continue;
      out << slot.epoch << ',' << (i + id_offset) << ',' << slot.values[i] << '\n';
    }
  }
}

Matrix load_coords_csv(const std::filesystem::path& path, int n_nodes, int id_offset) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  Matrix coords = Matrix::Constant(n_nodes, 2, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const char delim = line.find(',') != std::string::npos ? ',' : ' ';
    const auto f = split(line, delim);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() < 3) raise(ErrorCode::Parse, where + ": expected id x y");
    long long raw = 0;
    try {
      raw = std::stoll(f[0]);
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header
      raise(ErrorCode::Parse, where + ": bad id");
    }
    const long long idx = raw - id_offset;
    if (idx < 0 || idx >= n_nodes) raise(ErrorCode::UnknownSensor, where + ": id " + f[0]);
    coords(idx, 0) = to_double(f[1]);
    coords(idx, 1) = to_double(f[2]);
  }
  if (!coords.array().isFinite().all()) raise(ErrorCode::Parse, path.string() + ": missing coordinates");
  return coords;
}

double mean_pairwise_distance(const Matrix& coords) {
  const Eigen::Index n = coords.rows();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sum += (coords.row(i) - coords.row(j)).norm();
  return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

WeightedGraph build_sensor_graph(const Matrix& coords, const KernelGraphOptions& opts) {
  const Eigen::Index n = coords.rows();
  if (n < 1) raise(ErrorCode::OutOfRange, "no coordinates");
  const double theta = opts.theta > 0.0 ? opts.theta : mean_pairwise_distance(coords);
  Matrix w = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d2 = (coords.row(i) - coords.row(j)).squaredNorm();
      // theta -> 0 prunes every edge between distinct positions.
      double k = theta > 0.0 ? std::exp(-d2 / (theta * theta)) : (d2 == 0.0 ? 1.0 : 0.0);
      if (k < opts.kappa || k == 0.0) k = 0.0;
      w(i, j) = k;
      w(j, i) = k;
    }
  }
  try {
    return build_graph(w, opts.require_connected);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Disconnected) {
      raise(ErrorCode::Disconnected, "kernel graph is disconnected (theta=" + std::to_string(theta) +
                                         ", kappa=" + std::to_string(opts.kappa) + ")");
    }
    throw;
  }
}

}  // namespace pgsr
