#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pgsr/types.hpp"

namespace pgsr {

/// Undirected weighted graph stored as a dense symmetric adjacency matrix
/// with a zero diagonal.
class WeightedGraph {
 public:
  int n_nodes() const noexcept { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const noexcept { return weights_; }
  Vector degrees() const { return weights_.rowwise().sum(); }
  bool is_connected() const;

 private:
  friend WeightedGraph build_graph(const Matrix&, bool);
  Matrix weights_;
};

struct Laplacian {
  Matrix matrix;
};

/// Orthonormal Laplacian eigenbasis. Columns of `eigenvectors` are sorted by
/// ascending eigenvalue; within a column the entry of largest magnitude is
/// nonnegative (lowest index wins ties).
struct GftBasis {
  Matrix eigenvectors;
  Vector eigenvalues;

  int size() const noexcept { return static_cast<int>(eigenvalues.size()); }
};

/// Symmetric tolerance applied before (W + W^T)/2 averaging.
inline constexpr double kSymmetryTolerance = 1e-12;

/// Validates and symmetrizes an adjacency matrix. The diagonal is zeroed.
/// Throws NonSquare, AsymmetryBeyondTolerance, NegativeWeight, or
/// Disconnected (only when `require_connected`).
WeightedGraph build_graph(const Matrix& weights, bool require_connected = false);

/// Draws W_ij ~ U(0,1), averages with its transpose and zeroes the diagonal.
WeightedGraph random_uniform_graph(int n_nodes, std::uint64_t seed);

Laplacian laplacian(const WeightedGraph& g);

struct EigenOptions {
  int max_sweeps = 100;
  double relative_tolerance = 1e-12;
};

/// Cyclic Jacobi eigendecomposition of the Laplacian, followed by the
/// ordering and sign convention documented on GftBasis.
GftBasis gft_basis(const Laplacian& l, const EigenOptions& opts = {});

/// Same solver on an arbitrary symmetric matrix (no PSD assumption).
GftBasis symmetric_eigen(const Matrix& symmetric, const EigenOptions& opts = {});

Vector gft(const GftBasis& basis, const Vector& x);
Vector igft(const GftBasis& basis, const Vector& s);

/// Edge list: one `i,j,weight` row per undirected edge, 0-based indices.
/// Lines starting with '#' are ignored. Duplicate edges accumulate.
WeightedGraph load_edge_list_csv(const std::filesystem::path& path, int n_nodes,
                                 bool require_connected = false);

/// Dense matrix: n rows of n comma-separated values.
Matrix load_dense_matrix_csv(const std::filesystem::path& path);

}  // namespace pgsr
