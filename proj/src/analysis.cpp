#include "pgsr/analysis.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "pgsr/error.hpp"

namespace pgsr {

namespace {

void check_history(const Matrix& a, const std::vector<Matrix>& hist) {
  for (const auto& h : hist) {
    if (h.rows() != a.rows() || h.cols() != a.cols()) {
      raise(ErrorCode::DimensionMismatch, "history operator shape differs from current operator");
    }
  }
}

void check_gains(const Vector& g, const Vector& h, const Matrix& a) {
  if (g.size() != a.cols() || h.size() != a.cols()) {
    raise(ErrorCode::DimensionMismatch, "gain diagonals must have one entry per column of A");
  }
}

}  // namespace

Matrix build_b1(const Vector& g, const Vector& h, const Matrix& a_current,
                const std::vector<Matrix>& a_history) {
  check_gains(g, h, a_current);
  check_history(a_current, a_history);
  Matrix b1 = g.asDiagonal() * (a_current.transpose() * a_current);
  if (!a_history.empty()) {
    Matrix gram = Matrix::Zero(a_current.cols(), a_current.cols());
    for (const auto& aj : a_history) gram.noalias() += aj.transpose() * aj;
    b1.noalias() += h.asDiagonal() * gram;
  }
  return b1;
}

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols()) raise(ErrorCode::NonSquare, "spectral radius of non-square matrix");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) raise(ErrorCode::ConvergenceFailure, "general eigensolver");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

StabilityReport stability_bound(const Matrix& b1, double mu) {
  if (b1.rows() != b1.cols()) raise(ErrorCode::NonSquare, "B1 must be square");
  StabilityReport r;
  r.b1 = b1;
  r.mu = mu;
  const Matrix sym = 0.5 * (b1 + b1.transpose());
  r.b1_symmetric = (b1 - b1.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, b1.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  r.lambda_max = es.eigenvalues().maxCoeff();
  if (!(r.lambda_max > 0.0)) {
    raise(ErrorCode::NonPositiveLambdaMax, "lambda_max(B1) = " + std::to_string(r.lambda_max));
  }
  r.mu_bound = 2.0 / r.lambda_max;
  r.mu_within_bound = mu > 0.0 && mu < r.mu_bound;
  const Matrix f = Matrix::Identity(b1.rows(), b1.cols()) - mu * b1;
  r.mean_spectral_radius = spectral_radius(f);
  r.mean_stable = r.mean_spectral_radius < 1.0;
  return r;
}

SteadyStatePrediction steady_state_msd(const Vector& g, const Vector& h, const Matrix& a_current,
                                       const std::vector<Matrix>& a_history, const Matrix& noise_cov,
                                       double mu, bool keep_q) {
  const Eigen::Index n = a_current.cols();
  if (n > kMaxSteadyStateNodes) {
    raise(ErrorCode::TooLarge, "steady-state solve limited to N <= 64 (got " + std::to_string(n) + ")");
  }
  if (noise_cov.rows() != a_current.rows() || noise_cov.cols() != a_current.rows()) {
    raise(ErrorCode::DimensionMismatch, "noise covariance must be M x M");
  }
  const Matrix b1 = build_b1(g, h, a_current, a_history);
  const Matrix f = Matrix::Identity(n, n) - mu * b1;

  SteadyStatePrediction out;
  const double rho_f = spectral_radius(f);
  out.q_spectral_radius = rho_f * rho_f;  // rho(F^T kron F^T) = rho(F)^2
  if (out.q_spectral_radius >= 1.0) {
    raise(ErrorCode::SpectralRadiusGeOne,
          "rho(Q) = " + std::to_string(out.q_spectral_radius) + "; mu is outside the stable region");
  }

  out.p = g.asDiagonal() * (a_current.transpose() * noise_cov * a_current) * g.asDiagonal();
  if (!a_history.empty()) {
    Matrix hist = Matrix::Zero(n, n);
    for (const auto& aj : a_history) hist.noalias() += aj.transpose() * noise_cov * aj;
    out.p.noalias() += h.asDiagonal() * hist * h.asDiagonal();
  }

  const Eigen::Index nn = n * n;
  Matrix q(nn, nn);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) q.block(i * n, j * n, n, n) = f(j, i) * f.transpose();

  Matrix lhs = -q;
  lhs.diagonal().array() += 1.0;
  const Vector vec_i = Eigen::Map<const Vector>(Matrix::Identity(n, n).eval().data(), nn);
  const Vector phi = Eigen::PartialPivLU<Matrix>(lhs).solve(vec_i);
  const Vector vec_p = Eigen::Map<const Vector>(out.p.data(), nn);
  out.msd = mu * mu * vec_p.dot(phi);
  if (keep_q) out.q = std::move(q);
  return out;
}

MeanTrajectory mean_recursion_check(const Vector& g, const Vector& h, const Matrix& a_current,
                                    const std::vector<Matrix>& a_history, double mu,
                                    const Vector& initial_error, int horizon) {
  if (initial_error.size() != a_current.cols()) {
    raise(ErrorCode::DimensionMismatch, "initial error length");
  }
  const Matrix b1 = build_b1(g, h, a_current, a_history);
  const Matrix f = Matrix::Identity(b1.rows(), b1.cols()) - mu * b1;
  MeanTrajectory t;
  t.contraction = spectral_radius(f);
  t.mean_error.reserve(static_cast<std::size_t>(horizon) + 1);
  Vector e = initial_error;
  for (int n = 0; n <= horizon; ++n) {
    t.norms.push_back(e.norm());
    t.mean_error.push_back(e);
    if (!e.allFinite()) {
      t.diverged = true;
      break;
    }
    e = f * e;
  }
  const double start = t.norms.front();
  t.diverged = t.diverged || (start > 0.0 && t.norms.back() > 1e3 * start);
  return t;
}

}  // namespace pgsr
