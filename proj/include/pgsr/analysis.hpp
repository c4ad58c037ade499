#pragma once

#include <vector>

#include "pgsr/types.hpp"

namespace pgsr {

/// B1 = G A^T A + H sum_j A_j^T A_j, with G and H given by their diagonals.
Matrix build_b1(const Vector& g, const Vector& h, const Matrix& a_current,
                const std::vector<Matrix>& a_history);

struct StabilityReport {
  Matrix b1;
  /// Largest eigenvalue of the symmetric part (B1 + B1^T) / 2.
  double lambda_max = 0.0;
  /// 2 / lambda_max.
  double mu_bound = 0.0;
  /// rho(I - mu B1) for the supplied mu; the operative mean-stability check.
  double mean_spectral_radius = 0.0;
  double mu = 0.0;
  bool mu_within_bound = false;
  bool mean_stable = false;
  bool b1_symmetric = false;
};

/// Throws NonPositiveLambdaMax when the symmetric part has no positive
/// eigenvalue (e.g. A = 0).
StabilityReport stability_bound(const Matrix& b1, double mu);

/// Largest |eigenvalue| of a general square matrix.
double spectral_radius(const Matrix& m);

struct SteadyStatePrediction {
  Matrix p;
  /// F^T kron F^T with F = I - mu B1, so Q vec(X) = vec(F^T X F). Only materialized when `keep_q` was set.
  Matrix q;
  double q_spectral_radius = 0.0;
  double msd = 0.0;
};

inline constexpr int kMaxSteadyStateNodes = 64;

/// Steady-state MSD = mu^2 vec(P)^T (I - Q)^{-1} vec(I) with
/// P = G A^T C_e A G^T + H (sum_j A_j^T C_e A_j) H. Dense LU on the
/// N^2 x N^2 system. Throws SpectralRadiusGeOne and TooLarge (N > 64).
SteadyStatePrediction steady_state_msd(const Vector& g, const Vector& h, const Matrix& a_current,
                                       const std::vector<Matrix>& a_history, const Matrix& noise_cov,
                                       double mu, bool keep_q = false);

struct MeanTrajectory {
  /// E[s_tilde[n]] for n = 0..horizon.
  std::vector<Vector> mean_error;
  std::vector<double> norms;
  /// rho(I - mu B1).
  double contraction = 0.0;
  bool diverged = false;
};

/// Iterates E[s~[n+1]] = (I - mu B1) E[s~[n]] from `initial_error`.
MeanTrajectory mean_recursion_check(const Vector& g, const Vector& h, const Matrix& a_current,
                                    const std::vector<Matrix>& a_history, double mu,
                                    const Vector& initial_error, int horizon);

}  // namespace pgsr
