#pragma once

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "pgsr/types.hpp"

namespace testing {

inline double max_abs(const pgsr::Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Independent RNG for test inputs; deliberately not the library's streams.
struct Rand {
  explicit Rand(unsigned seed) : eng(seed) {}
  std::mt19937 eng;
  double uni(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
  double gauss() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
  pgsr::Matrix gauss_matrix(int r, int c) {
    pgsr::Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = gauss();
    return m;
  }
  pgsr::Vector gauss_vector(int n) { return gauss_matrix(n, 1).col(0); }
  pgsr::Matrix symmetric_weights(int n) {
    pgsr::Matrix w(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) w(i, j) = uni();
    w = 0.5 * (w + w.transpose()).eval();
    w.diagonal().setZero();
    return w;
  }
};

inline std::string data_path(const std::string& name) { return std::string(PGSR_TEST_DATA) + "/" + name; }

}  // namespace testing
