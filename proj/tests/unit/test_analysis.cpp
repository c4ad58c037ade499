#include <doctest.h>

#include <cmath>
#include <functional>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "helpers.hpp"
#include "pgsr/analysis.hpp"
#include "pgsr/error.hpp"

using namespace pgsr;
using testing::max_abs;

namespace {

Matrix orthogonal(testing::Rand& rng, int n) {
  Eigen::HouseholderQR<Matrix> qr(rng.gauss_matrix(n, n));
  return qr.householderQ() * Matrix::Identity(n, n);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

// mu^2 sum_k tr(F^k P F^kT), i.e. the trace of the fixed point of X = F X F^T + mu^2 P.
double msd_series(const Matrix& p, const Matrix& f, double mu) {
  Matrix m = Matrix::Identity(f.rows(), f.cols());
  double total = 0.0;
  for (int k = 0; k < 200000; ++k) {
    const double term = (p.array() * m.array()).sum();
    total += term;
    if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(total)) && k > 10) break;
    m = (f.transpose() * m * f).eval();
  }
  return mu * mu * total;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("B1 with G = I, H = 0 and orthonormal A is the identity") {
  testing::Rand rng(1);
  const Matrix u = orthogonal(rng, 6);
  const Matrix b1 = build_b1(Vector::Ones(6), Vector::Zero(6), u, {});
  CHECK(max_abs(b1 - Matrix::Identity(6, 6)) < 1e-12);
}

TEST_CASE("B1 matches an explicit entrywise sum") {
  testing::Rand rng(2);
  const Matrix a = rng.gauss_matrix(4, 3);
  const std::vector<Matrix> hist = {rng.gauss_matrix(4, 3), rng.gauss_matrix(4, 3)};
  const Vector g = rng.gauss_vector(3);
  const Vector h = rng.gauss_vector(3);
  const Matrix b1 = build_b1(g, h, a, hist);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double cur = 0.0;
      double past = 0.0;
      for (int r = 0; r < 4; ++r) {
        cur += a(r, i) * a(r, j);
        for (const auto& aj : hist) past += aj(r, i) * aj(r, j);
      }
      CHECK(b1(i, j) == doctest::Approx(g[i] * cur + h[i] * past).epsilon(1e-12));
    }
  CHECK(code_of([&] { build_b1(Vector::Ones(2), h, a, hist); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { build_b1(g, h, a, {Matrix::Zero(3, 3)}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("stability bound examples") {
  const StabilityReport r = stability_bound(Matrix::Identity(4, 4), 1.0);
  CHECK(r.lambda_max == doctest::Approx(1.0));
  CHECK(r.mu_bound == doctest::Approx(2.0));
  CHECK(r.mu_within_bound);
  CHECK(r.b1_symmetric);
  CHECK(r.mean_spectral_radius == doctest::Approx(0.0).epsilon(1e-12));

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 1.0;
  const StabilityReport r2 = stability_bound(d, 0.6);
  CHECK(r2.mu_bound == doctest::Approx(0.5));
  CHECK_FALSE(r2.mu_within_bound);
  CHECK_FALSE(r2.mean_stable);

  CHECK(code_of([] { stability_bound(Matrix::Zero(3, 3), 0.1); }) == ErrorCode::NonPositiveLambdaMax);
}

TEST_CASE("steady-state MSD: zero noise gives zero") {
  testing::Rand rng(3);
  const Matrix a = rng.gauss_matrix(6, 5);
  const SteadyStatePrediction p =
      steady_state_msd(Vector::Ones(5), Vector::Zero(5), a, {}, Matrix::Zero(6, 6), 0.05);
  CHECK(p.msd == 0.0);
  CHECK(max_abs(p.p) == 0.0);
}

TEST_CASE("steady-state MSD: scalar closed form") {
  const double g = 1.3;
  const double a = 0.8;
  const double var = 0.05;
  const double mu = 0.4;
  Matrix am(1, 1);
  am(0, 0) = a;
  const SteadyStatePrediction p =
      steady_state_msd(Vector::Constant(1, g), Vector::Zero(1), am, {}, Matrix::Constant(1, 1, var), mu);
  const double f = 1.0 - mu * g * a * a;
  const double expected = mu * mu * g * g * a * a * var / (1.0 - f * f);
  CHECK(p.msd == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p.q_spectral_radius == doctest::Approx(f * f).epsilon(1e-12));
}

TEST_CASE("steady-state MSD agrees with the truncated power series") {
  testing::Rand rng(4);
  int checked = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = rng.integer(2, 7);
    const int m = rng.integer(2, 6);
    const Matrix a = rng.gauss_matrix(m, n);
    std::vector<Matrix> hist;
    const int k = rng.integer(0, 2);
    for (int j = 0; j < k; ++j) hist.push_back(rng.gauss_matrix(m, n));
    Vector g(n);
    Vector h(n);
    for (int i = 0; i < n; ++i) {
      g[i] = rng.uni(0.5, 1.5);
      h[i] = k > 0 ? rng.uni(0.0, 0.5) : 0.0;
    }
    const Matrix l = rng.gauss_matrix(m, m);
    const Matrix cov = 0.01 * l * l.transpose();
    const Matrix b1 = build_b1(g, h, a, hist);
    const double mu = 0.5 / stability_bound(b1, 1.0).lambda_max;
    const Matrix f = Matrix::Identity(n, n) - mu * b1;
    if (spectral_radius(f) >= 0.999) continue;

    Matrix pm = g.asDiagonal() * a.transpose() * cov * a * g.asDiagonal();
    for (const auto& aj : hist) pm += h.asDiagonal() * aj.transpose() * cov * aj * h.asDiagonal();

    const SteadyStatePrediction pred = steady_state_msd(g, h, a, hist, cov, mu, true);
    CHECK(max_abs(pred.p - pm) < 1e-12);
    CHECK(pred.q.rows() == n * n);
    CHECK(pred.msd == doctest::Approx(msd_series(pm, f, mu)).epsilon(1e-8));
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("steady-state MSD preconditions") {
  testing::Rand rng(5);
  const Matrix big = rng.gauss_matrix(3, 65);
  CHECK(code_of([&] {
          steady_state_msd(Vector::Ones(65), Vector::Zero(65), big, {}, Matrix::Identity(3, 3), 0.01);
        }) == ErrorCode::TooLarge);
  Matrix a(1, 1);
  a(0, 0) = 1.0;
  CHECK(code_of([&] {
          steady_state_msd(Vector::Ones(1), Vector::Zero(1), a, {}, Matrix::Identity(1, 1), 3.0);
        }) == ErrorCode::SpectralRadiusGeOne);
  CHECK(code_of([&] {
          steady_state_msd(Vector::Ones(1), Vector::Zero(1), a, {}, Matrix::Identity(2, 2), 0.1);
        }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("mean recursion halves the error when I - mu B1 = I / 2") {
  testing::Rand rng(6);
  const Matrix u = orthogonal(rng, 5);
  const Vector e0 = rng.gauss_vector(5);
  const MeanTrajectory t = mean_recursion_check(Vector::Ones(5), Vector::Zero(5), u, {}, 0.5, e0, 30);
  REQUIRE(t.norms.size() == 31);
  for (int n = 0; n < 30; ++n) CHECK(std::abs(t.norms[n + 1] - 0.5 * t.norms[n]) < 1e-10 * t.norms[0]);
  CHECK(t.contraction == doctest::Approx(0.5).epsilon(1e-10));
  CHECK_FALSE(t.diverged);
}

TEST_CASE("mean recursion at mu = 0 stays put; above the bound it diverges") {
  testing::Rand rng(7);
  const Matrix a = rng.gauss_matrix(5, 5);
  const Vector e0 = rng.gauss_vector(5);
  const MeanTrajectory still = mean_recursion_check(Vector::Ones(5), Vector::Zero(5), a, {}, 0.0, e0, 10);
  for (const Vector& e : still.mean_error) CHECK(max_abs(e - e0) == 0.0);

  const double lam = stability_bound(a.transpose() * a, 1.0).lambda_max;
  const MeanTrajectory blow = mean_recursion_check(Vector::Ones(5), Vector::Zero(5), a, {}, 2.2 / lam, e0, 500);
  CHECK(blow.diverged);
  CHECK(blow.contraction > 1.0);
}

TEST_CASE("spectral radius below one matches observed contraction") {
  testing::Rand rng(8);
  int stable = 0;
  int unstable = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = rng.integer(2, 6);
    const Matrix a = rng.gauss_matrix(rng.integer(n, n + 3), n);
    Vector g(n);
    for (int i = 0; i < n; ++i) g[i] = rng.uni(0.2, 2.0);
    const Matrix b1 = build_b1(g, Vector::Zero(n), a, {});
    const double mu = rng.uni(0.1, 3.0) / stability_bound(b1, 1.0).lambda_max;
    Eigen::EigenSolver<Matrix> es(Matrix::Identity(n, n) - mu * b1, false);
    const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    if (std::abs(rho - 1.0) < 0.02) continue;
    const MeanTrajectory tr = mean_recursion_check(g, Vector::Zero(n), a, {}, mu, rng.gauss_vector(n), 3000);
    if (rho < 1.0) {
      ++stable;
      CHECK(tr.norms.back() < 1e-6 * tr.norms.front());
    } else {
      ++unstable;
      CHECK(tr.diverged);
    }
  }
  CHECK(stable > 0);
  CHECK(unstable > 0);
}

}  // TEST_SUITE
