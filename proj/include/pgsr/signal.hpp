#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgsr/graph.hpp"
#include "pgsr/types.hpp"

namespace pgsr {

/// True spectrum s_true (zero beyond `bandwidth`) and its node-domain image.
struct GroundTruth {
  Vector s_true;
  Vector x_true;
  int bandwidth = 0;
};

/// First `bandwidth` GFT coefficients i.i.d. N(0, sigma^2); the rest are
/// stored zeros.
GroundTruth synth_bandlimited(const GftBasis& basis, int bandwidth, std::uint64_t seed,
                              double sigma = 1.0);

/// Ground truth taken from a measured node-domain vector: s_true = U^T x.
GroundTruth truth_from_signal(const GftBasis& basis, const Vector& x);

struct SensorColumns {
  int epoch = 0;
  int sensor = 1;
  int value = 2;
  /// Mapped index = raw id - id_offset; must land in [0, n_nodes).
  int id_offset = 0;
  /// ',' or ' ' (any run of whitespace).
  char delimiter = ',';
  bool has_header = false;
  /// Rows whose id maps outside [0, n_nodes) are dropped instead of raising.
  bool skip_unknown = false;
};

/// One retained time slot. `vector` is NaN where no reading arrived until
/// impute_missing() fills it.
struct SensorSlot {
  long long epoch = 0;
  Vector values;
  std::vector<char> imputed;
};

struct SensorData {
  int n_nodes = 0;
  std::vector<SensorSlot> slots;
  /// Total imputed readings across all slots, reported in run metadata.
  int imputed_count = 0;
};

/// Parses (epoch, sensor_id, value) rows into per-epoch vectors, ascending
/// by epoch. Repeated readings in one slot keep the last one. Throws
/// UnknownSensor and EmptySlot (a slot whose readings are all non-finite).
SensorData load_sensor_csv(const std::filesystem::path& path, int n_nodes,
                           const SensorColumns& columns = {});

/// Fills missing readings with the mean of present graph neighbours (W > 0).
/// A node with no present neighbour gets the mean of the slot's readings.
void impute_missing(SensorData& data, const WeightedGraph& graph);

/// Writes `epoch,sensor_id,value` rows (ids with offset re-applied).
void write_sensor_csv(const SensorData& data, const std::filesystem::path& path, int id_offset = 0);

/// Whitespace- or comma-separated `id x y` rows, id - id_offset in [0, n).
Matrix load_coords_csv(const std::filesystem::path& path, int n_nodes, int id_offset = 0);

struct KernelGraphOptions {
  /// theta <= 0 selects the mean pairwise distance.
  double theta = 0.0;
  double kappa = 0.0;
  bool require_connected = true;
};

/// W_ij = exp(-d_ij^2 / theta^2) kept when >= kappa, else 0.
WeightedGraph build_sensor_graph(const Matrix& coords, const KernelGraphOptions& opts = {});

double mean_pairwise_distance(const Matrix& coords);

}  // namespace pgsr
