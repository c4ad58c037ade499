#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pgsr/types.hpp"

namespace pgsr {

/// ||s_true - s_est||^2 / ||s_true||^2. Throws ZeroReference for s_true = 0.
double nmsd(const Vector& s_true, const Vector& s_est);

/// ||s~[n+1]||_Q^2 - ||s~[n]||_Q^2 with Q = A^T A.
double gmsd_empirical(const Vector& s_true, const Vector& s_before, const Vector& s_after,
                      const Matrix& a);

/// Sum in a fixed binary-tree order, independent of thread scheduling.
double pairwise_sum(const double* x, std::size_t n);

struct NmsdCurve {
  std::vector<double> values;
  std::vector<double> stderr_values;
  int trials = 0;
  std::string algorithm;
  std::uint64_t scenario_hash = 0;
};

/// Per-iteration mean and standard error of the mean. Throws RaggedInput
/// on unequal lengths and on an empty input.
NmsdCurve ensemble_mean(const std::vector<std::vector<double>>& curves);

/// `iter,mean_nmsd,stderr`, one row per iteration.
void write_curve_csv(const NmsdCurve& curve, const std::filesystem::path& path);
NmsdCurve read_curve_csv(const std::filesystem::path& path);

/// Shortest decimal form that round-trips, used by every CSV writer.
std::string format_double(double v);

}  // namespace pgsr
