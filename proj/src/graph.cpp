#include "pgsr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "pgsr/error.hpp"
#include "pgsr/random.hpp"

namespace pgsr {

bool WeightedGraph::is_connected() const {
  const int n = n_nodes();
  if (n <= 1) return true;
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u = 0; u < n; ++u) {
      if (!seen[u] && weights_(v, u) > 0.0) {
        seen[u] = 1;
        ++visited;
        stack.push_back(u);
      }
    }
  }
  return visited == n;
}

WeightedGraph build_graph(const Matrix& weights, bool require_connected) {
  if (weights.rows() != weights.cols()) {
    raise(ErrorCode::NonSquare, "adjacency is " + std::to_string(weights.rows()) + "x" +
                                    std::to_string(weights.cols()));
  }
  if (weights.rows() == 0) raise(ErrorCode::OutOfRange, "graph needs at least one node");
  const Eigen::Index n = weights.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = weights(i, j);
      if (!std::isfinite(w)) raise(ErrorCode::NegativeWeight, "non-finite weight");
      if (i != j && w < 0.0) {
        raise(ErrorCode::NegativeWeight,
              "W[" + std::to_string(i) + "][" + std::to_string(j) + "] = " + std::to_string(w));
      }
      if (std::abs(w - weights(j, i)) > kSymmetryTolerance) {
        raise(ErrorCode::AsymmetryBeyondTolerance,
              "|W[i][j] - W[j][i]| exceeds tolerance at (" + std::to_string(i) + ", " +
                  std::to_string(j) + ")");
      }
    }
  }
  WeightedGraph g;
  g.weights_ = 0.5 * (weights + weights.transpose());
  g.weights_.diagonal().setZero();
  if (require_connected && !g.is_connected()) {
    raise(ErrorCode::Disconnected, "graph has more than one component");
  }
  return g;
}

WeightedGraph random_uniform_graph(int n_nodes, std::uint64_t seed) {
  if (n_nodes < 1) raise(ErrorCode::OutOfRange, "n_nodes must be positive");
  Stream rng(seed);
  Matrix w(n_nodes, n_nodes);
  // Column-major fill order is part of the reproducibility contract.
  for (int j = 0; j < n_nodes; ++j) {
    for (int i = 0; i < n_nodes; ++i) w(i, j) = rng.uniform();
  }
  Matrix sym = 0.5 * (w + w.transpose());
  return build_graph(sym, false);
}

Laplacian laplacian(const WeightedGraph& g) {
  const Matrix& w = g.weights();
  Laplacian l{-w};
  l.matrix.diagonal() = w.rowwise().sum();
  return l;
}

namespace {

// In-place cyclic Jacobi on a symmetric matrix. Returns eigenvectors in the
// columns of v; eigenvalues are left on the diagonal of a.
void jacobi(Matrix& a, Matrix& v, const EigenOptions& opts) {
  const Eigen::Index n = a.rows();
  v.setIdentity(n, n);
  const double scale = a.norm();
  if (n <= 1 || scale == 0.0) return;
  const double target = opts.relative_tolerance * scale;

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index q = 1; q < n; ++q)
      for (Eigen::Index p = 0; p < q; ++p) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    if (off_norm() < target) return;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() >= target) {
    raise(ErrorCode::ConvergenceFailure,
          "Jacobi did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
  }
}

void normalize_sign(Eigen::Ref<Vector> col) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < col.size(); ++i) {
    if (std::abs(col[i]) > std::abs(col[best])) best = i;
  }
  if (col[best] < 0.0) col = -col;
}

}  // namespace

GftBasis symmetric_eigen(const Matrix& symmetric, const EigenOptions& opts) {
  if (symmetric.rows() != symmetric.cols()) raise(ErrorCode::NonSquare, "eigensolver input");
  Matrix a = 0.5 * (symmetric + symmetric.transpose());
  Matrix v;
  jacobi(a, v, opts);

  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) normalize_sign(v.col(k));

  const Vector lambda = a.diagonal();
  const double tie = 1e-10 * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    if (std::abs(lambda[i] - lambda[j]) > tie) return lambda[i] < lambda[j];
    // Degenerate pair: lexicographically larger eigenvector first.
    for (Eigen::Index k = 0; k < n; ++k) {
      if (v(k, i) != v(k, j)) return v(k, i) > v(k, j);
    }
    return false;
  });

  GftBasis basis;
  basis.eigenvectors.resize(n, n);
  basis.eigenvalues.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    basis.eigenvectors.col(k) = v.col(order[k]);
    basis.eigenvalues[k] = lambda[order[k]];
  }
  return basis;
}

GftBasis gft_basis(const Laplacian& l, const EigenOptions& opts) {
  GftBasis basis = symmetric_eigen(l.matrix, opts);
  // Round-off can leave the null eigenvalue a hair below zero.
  const double floor = -1e-9 * std::max(1.0, basis.eigenvalues.maxCoeff());
  for (Eigen::Index k = 0; k < basis.eigenvalues.size(); ++k) {
    if (basis.eigenvalues[k] < 0.0 && basis.eigenvalues[k] >= floor) basis.eigenvalues[k] = 0.0;
  }
  return basis;
}

Vector gft(const GftBasis& basis, const Vector& x) {
  if (x.size() != basis.size()) raise(ErrorCode::DimensionMismatch, "gft: signal length");
  return basis.eigenvectors.transpose() * x;
}

Vector igft(const GftBasis& basis, const Vector& s) {
  if (s.size() != basis.size()) raise(ErrorCode::DimensionMismatch, "igft: spectrum length");
  return basis.eigenvectors * s;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

bool skip_line(const std::string& line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    return v;
  } catch (const std::exception&) {
    raise(ErrorCode::Parse, where + ": cannot parse '" + s + "'");
  }
}

}  // namespace

WeightedGraph load_edge_list_csv(const std::filesystem::path& path, int n_nodes,
                                 bool require_connected) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  if (n_nodes < 1) raise(ErrorCode::OutOfRange, "n_nodes must be positive");
  Matrix w = Matrix::Zero(n_nodes, n_nodes);
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto f = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 3) raise(ErrorCode::Parse, where + ": expected i,j,weight");
    // Tolerate a textual header row.
    const bool header = first && f[0].find_first_of("0123456789") == std::string::npos;
    first = false;
    if (header) continue;
    const double fi = parse_double(f[0], where);
    const double fj = parse_double(f[1], where);
    const double weight = parse_double(f[2], where);
    const int i = static_cast<int>(fi);
    const int j = static_cast<int>(fj);
    if (i < 0 || j < 0 || i >= n_nodes || j >= n_nodes || i != fi || j != fj) {
      raise(ErrorCode::OutOfRange, where + ": node index outside [0, n_nodes)");
    }
    if (i == j) continue;
    w(i, j) += weight;
    w(j, i) += weight;
  }
  return build_graph(w, require_connected);
}

Matrix load_dense_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    std::vector<double> row;
    for (const auto& f : split_csv(line)) {
      row.push_back(parse_double(f, path.string() + ":" + std::to_string(lineno)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      raise(ErrorCode::RaggedInput, path.string() + ":" + std::to_string(lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) raise(ErrorCode::Parse, path.string() + ": empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

}  // namespace pgsr
