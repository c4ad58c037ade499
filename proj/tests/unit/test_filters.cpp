#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "oracles.hpp"
#include "pgsr/error.hpp"
#include "pgsr/filters.hpp"
#include "pgsr/graph.hpp"
#include "pgsr/sampling.hpp"
#include "pgsr/signal.hpp"

using namespace pgsr;
using testing::max_abs;

namespace {

struct Scenario {
  GftBasis basis;
  SamplingOperator op;
  GroundTruth truth;
  NoiseModel noise;
};

// The N=50, |F|=15, M=30, |S|=20, sigma^2=0.01 setup.
Scenario standard(std::uint64_t seed, int n = 50, int f = 15, int m = 30, int s = 20, double var = 0.01) {
  const GftBasis b = gft_basis(laplacian(random_uniform_graph(n, seed)));
  SamplingOperator op = make_operator(b, m, s, seed + 1);
  return Scenario{b, std::move(op), synth_bandlimited(b, f, seed + 2), NoiseModel::isotropic(m, var, seed + 3)};
}

double lambda_max_ata(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a.transpose() * a);
  return es.eigenvalues().maxCoeff();
}

std::vector<Vector> trajectory(Algorithm alg, const FilterConfig& cfg, const Scenario& sc, int steps) {
  Filter f(alg, cfg, sc.basis.size());
  std::vector<Vector> out;
  for (int n = 0; n < steps; ++n) {
    f.update(sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n));
    out.push_back(f.state().s_est);
  }
  return out;
}

bool bitwise_equal(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i].array() == b[i].array()).all()) return false;
  return true;
}

}  // namespace

TEST_SUITE("filters") {

TEST_CASE("GLMS: zero residual is a fixed point") {
  const Scenario sc = standard(10, 12, 4, 6, 8);
  FilterState st = FilterState::zeros(12);
  testing::Rand rng(1);
  st.s_est = rng.gauss_vector(12);
  const Vector y = sc.op.composite() * st.s_est;
  FilterConfig cfg;
  const FilterState next = glms_step(st, sc.op.composite(), y, cfg);
  CHECK(max_abs(next.s_est - st.s_est) < 1e-15);
  CHECK(next.n == 1);
}

TEST_CASE("GLMS with A = U and mu = 0.5 halves the error each step") {
  const Scenario sc = standard(11, 10, 10, 10, 10, 0.0);
  FilterConfig cfg;
  cfg.mu = 0.5;
  const Matrix& u = sc.basis.eigenvectors;
  FilterState st = FilterState::zeros(10);
  double prev = sc.truth.s_true.norm();
  for (int n = 0; n < 20; ++n) {
    st = glms_step(st, u, u * sc.truth.s_true, cfg);
    const double err = (sc.truth.s_true - st.s_est).norm();
    CHECK(err == doctest::Approx(0.5 * prev).epsilon(1e-9));
    prev = err;
  }
}

TEST_CASE("step functions leave their input untouched") {
  const Scenario sc = standard(12, 8, 3, 5, 6);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.history_gain = HistoryGain::Coupled;
  cfg.k_history = 3;
  cfg.noise_cov = sc.noise.covariance();
  FilterState st = FilterState::zeros(8);
  for (int n = 0; n < 4; ++n) st = ptgelms_step(st, sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n), cfg);
  const FilterState copy = st;
  (void)ptgelms_step(st, sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, 9), cfg);
  CHECK(max_abs(copy.s_est - st.s_est) == 0.0);
  CHECK(copy.history.size() == st.history.size());
  CHECK(copy.n == st.n);
}

TEST_CASE("literature gains") {
  FilterConfig cfg;
  const Vector zero = Vector::Zero(7);
  CHECK(max_abs(literature_gains(zero, cfg) - Vector::Ones(7)) < 1e-15);
  const Vector flat = Vector::Constant(7, -0.5);
  CHECK(max_abs(literature_gains(flat, cfg) - Vector::Ones(7)) < 1e-15);

  testing::Rand rng(4);
  for (int t = 0; t < 20; ++t) {
    const Vector s = rng.gauss_vector(15);
    CHECK(literature_gains(s, cfg).mean() == doctest::Approx(1.0).epsilon(1e-12));
    FilterConfig mu_law = cfg;
    mu_law.magnitude = Magnitude::MuLaw;
    CHECK(literature_gains(s, mu_law).mean() == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Hand evaluation: s = (1, 0.5, 0), rho = 0.1, delta = 0.01.
  FilterConfig c2;
  c2.rho = 0.1;
  Vector s(3);
  s << 1.0, -0.5, 0.0;
  // gamma_min = 1; gamma = (1, 0.5, 0.1); mean = 1.6 / 3.
  const Vector g = literature_gains(s, c2);
  CHECK(g[0] == doctest::Approx(3.0 / 1.6));
  CHECK(g[1] == doctest::Approx(1.5 / 1.6));
  CHECK(g[2] == doctest::Approx(0.3 / 1.6));
}

TEST_CASE("GMSD gain, noise-free: g_i = 1 / (mu * ||A_i||^2)") {
  testing::Rand rng(5);
  const Matrix a = rng.gauss_matrix(5, 7);
  const Vector y = rng.gauss_vector(5);
  FilterConfig cfg;
  cfg.mu = 0.05;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.step_cap = 0.0;
  cfg.gain_cap = 1e12;
  cfg.gain_floor = 0.0;
  const FilterState st = FilterState::zeros(7);
  const GainResult r = gmsd_gain_ptglms(st, a, y, cfg);
  for (int i = 0; i < 7; ++i) {
    const double expected = 1.0 / (cfg.mu * a.col(i).squaredNorm());
    CHECK(r.raw_g[i] == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("GMSD gain, zero residual: raw gain hits the floor and the step is skipped") {
  testing::Rand rng(6);
  const Matrix a = rng.gauss_matrix(4, 6);
  FilterState st = FilterState::zeros(6);
  st.s_est = rng.gauss_vector(6);
  const Vector y = a * st.s_est;
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.noise_cov = 0.1 * Matrix::Identity(4, 4);
  cfg.step_cap = 0.0;
  const GainResult r = gmsd_gain_ptglms(st, a, y, cfg);
  for (int i = 0; i < 6; ++i) CHECK(r.g[i] == -cfg.gain_cap);
  const FilterState next = ptglms_step(st, a, y, cfg);
  CHECK(max_abs(next.s_est - st.s_est) == 0.0);
  CHECK(next.n == st.n + 1);
}

TEST_CASE("GMSD gain: derivative of the single-gain objective vanishes") {
  testing::Rand rng(7);
  for (int t = 0; t < 100; ++t) {
    const int n = rng.integer(1, 8);
    const int m = rng.integer(1, 6);
    const Matrix a = rng.gauss_matrix(m, n);
    const Vector y = rng.gauss_vector(m);
    const Matrix l = rng.gauss_matrix(m, m);
    const Matrix cov = 0.1 * l * l.transpose();
    FilterState st = FilterState::zeros(n);
    st.s_est = rng.gauss_vector(n);
    FilterConfig cfg;
    cfg.mu = rng.uni(0.005, 0.5);
    cfg.gain_rule = GainRule::GmsdOptimal;
    cfg.noise_cov = cov;
    cfg.gain_floor = 0.0;
    const GainResult r = gmsd_gain_ptglms(st, a, y, cfg);
    for (int i = 0; i < n; ++i) {
      const Vector e = oracle::residual(a, y, st.s_est);
      const double p = oracle::dot_col(a, i, e);
      const double c1 = cfg.mu * (p * p - oracle::quad(a, i, cov, a, i));
      const double curv = cfg.mu * cfg.mu * p * p * oracle::column_energy(a, i);
      const double scale = 2.0 * std::abs(curv * r.raw_g[i]) + 2.0 * std::abs(c1);
      auto f = [&](double g) { return oracle::delta_single(g, a, y, st.s_est, cov, i, cfg.mu); };
      CHECK(oracle::fd_relative(f, r.raw_g[i], scale) < 1e-6);
    }
  }
}

TEST_CASE("scalar case: two hand-computed iterations") {
  Matrix a(1, 1);
  a(0, 0) = 2.0;
  FilterConfig cfg;
  cfg.mu = 0.1;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.noise_cov = Matrix::Constant(1, 1, 0.5);
  FilterState st = FilterState::zeros(1);
  st = ptglms_step(st, a, Vector::Constant(1, 2.3), cfg);
  CHECK(st.g_diag[0] == doctest::Approx(2.2637051039697544).epsilon(1e-12));
  CHECK(st.s_est[0] == doctest::Approx(1.041304347826087).epsilon(1e-12));
  // Values from exact rational arithmetic.
  // Second step: the raw gain is -13.15, clamped by the stability cap 1/(mu a^2) = 2.5.
  const GainResult r = gmsd_gain_ptglms(st, a, Vector::Constant(1, 1.8), cfg);
  CHECK(r.raw_g[0] == doctest::Approx(-13.150887573964496).epsilon(1e-9));
  st = ptglms_step(st, a, Vector::Constant(1, 1.8), cfg);
  CHECK(st.g_diag[0] == -2.5);
  CHECK(st.s_est[0] == doctest::Approx(1.182608695652174).epsilon(1e-12));
  cfg.nonneg_gains = true;
  CHECK(gmsd_gain_ptglms(st, a, Vector::Constant(1, 1.8), cfg).g[0] >= 0.0);
}

TEST_CASE("coupled gains: empty history reduces to the single-gain rule") {
  testing::Rand rng(8);
  const Matrix a = rng.gauss_matrix(5, 8);
  const Vector y = rng.gauss_vector(5);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.history_gain = HistoryGain::Coupled;
  cfg.k_history = 4;
  cfg.noise_cov = 0.01 * Matrix::Identity(5, 5);
  FilterState st = FilterState::zeros(8);
  st.s_est = rng.gauss_vector(8);
  const GainResult pair = gmsd_gains_ptgelms(st, a, y, cfg);
  const GainResult single = gmsd_gain_ptglms(st, a, y, cfg);
  CHECK((pair.g.array() == single.g.array()).all());
  CHECK(max_abs(pair.h) == 0.0);
}

TEST_CASE("coupled gains: each half-step solves its own stationarity condition") {
  testing::Rand rng(9);
  for (int t = 0; t < 100; ++t) {
    const int n = rng.integer(1, 8);
    const int m = rng.integer(1, 6);
    const int past_len = rng.integer(1, 3);
    const Matrix a = rng.gauss_matrix(m, n);
    const Vector y = rng.gauss_vector(m);
    const Matrix l = rng.gauss_matrix(m, m);
    const Matrix cov = 0.1 * l * l.transpose();
    FilterState st = FilterState::zeros(n);
    st.s_est = rng.gauss_vector(n);
    std::vector<oracle::Past> past;
    for (int j = 0; j < past_len; ++j) {
      past.push_back({rng.gauss_matrix(m, n), rng.gauss_vector(m)});
      st.history.push_back(HistoryEntry{past.back().a, past.back().y});
    }
    FilterConfig cfg;
    cfg.mu = rng.uni(0.005, 0.5);
    cfg.gain_rule = GainRule::GmsdOptimal;
    cfg.history_gain = HistoryGain::Coupled;
    cfg.k_history = past_len + 1;
    cfg.noise_cov = cov;
    cfg.inner_iters = 1;
    cfg.gain_floor = 0.0;
    const GainResult r = gmsd_gains_ptgelms(st, a, y, cfg);
    for (int i = 0; i < n; ++i) {
      const double g = r.raw_g[i];
      const double h = r.raw_h[i];
      // First pass: g minimizes over g at h = 0, then h minimizes over h at that g.
      auto fg = [&](double x) { return oracle::delta_pair(x, 0.0, a, y, st.s_est, past, cov, i, cfg.mu); };
      auto fh = [&](double x) { return oracle::delta_pair(g, x, a, y, st.s_est, past, cov, i, cfg.mu); };
      const double scale_g = std::abs(fg(g + 1.0) - 2.0 * fg(g) + fg(g - 1.0)) * std::max(1.0, std::abs(g)) +
                             std::abs(fg(1.0) - fg(-1.0)) / 2.0;
      const double scale_h = std::abs(fh(h + 1.0) - 2.0 * fh(h) + fh(h - 1.0)) * std::max(1.0, std::abs(h)) +
                             std::abs(fh(1.0) - fh(-1.0)) / 2.0;
      CHECK(oracle::fd_relative(fg, g, scale_g) < 1e-6);
      CHECK(oracle::fd_relative(fh, h, scale_h) < 1e-6);
    }
  }
}

TEST_CASE("coupled gains: fixed-point residual does not grow across passes") {
  const Scenario sc = standard(20);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.history_gain = HistoryGain::Coupled;
  cfg.k_history = 8;
  cfg.noise_cov = sc.noise.covariance();
  FilterState st = FilterState::zeros(50);
  for (int n = 0; n < 30; ++n) {
    st = ptgelms_step(st, sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n), cfg);
  }
  const Vector y = observe(sc.op, sc.truth.s_true, sc.noise, 30);
  std::vector<Vector> g_by_pass;
  for (int passes = 1; passes <= 4; ++passes) {
    cfg.inner_iters = passes;
    g_by_pass.push_back(gmsd_gains_ptgelms(st, sc.op.composite(), y, cfg).raw_g);
  }
  // |g_p - g_{p+1}| is the residual of the g-condition after pass p.
  const double d1 = (g_by_pass[1] - g_by_pass[0]).norm();
  const double d2 = (g_by_pass[2] - g_by_pass[1]).norm();
  const double d3 = (g_by_pass[3] - g_by_pass[2]).norm();
  MESSAGE("fixed-point residuals: " << d1 << " " << d2 << " " << d3);
  CHECK(d2 <= d1 * (1.0 + 1e-9));
  CHECK(d3 <= d2 * (1.0 + 1e-9));
}

TEST_CASE("reduction lattice is bitwise on the N=50 scenario") {
  const Scenario sc = standard(30);
  FilterConfig base;
  base.noise_cov = sc.noise.covariance();
  const int steps = 300;

  FilterConfig identity = base;
  identity.gain_rule = GainRule::Identity;
  CHECK(bitwise_equal(trajectory(Algorithm::PtGlms, identity, sc, steps), trajectory(Algorithm::Glms, base, sc, steps)));

  for (GainRule rule : {GainRule::Literature, GainRule::GmsdOptimal}) {
    FilterConfig pt = base;
    pt.gain_rule = rule;
    const auto ref = trajectory(Algorithm::PtGlms, pt, sc, steps);
    FilterConfig zero_h = pt;
    zero_h.k_history = 8;
    zero_h.history_gain = HistoryGain::Zero;
    CHECK(bitwise_equal(trajectory(Algorithm::PtGelms, zero_h, sc, steps), ref));
    FilterConfig k1 = pt;
    k1.k_history = 1;
    k1.history_gain = rule == GainRule::GmsdOptimal ? HistoryGain::Coupled : HistoryGain::Identity;
    CHECK(bitwise_equal(trajectory(Algorithm::PtGelms, k1, sc, steps), ref));
  }

  FilterConfig ident_ext = base;
  ident_ext.k_history = 8;
  ident_ext.gain_rule = GainRule::Identity;
  ident_ext.history_gain = HistoryGain::Identity;
  CHECK(bitwise_equal(trajectory(Algorithm::PtGelms, ident_ext, sc, steps), trajectory(Algorithm::Elms, ident_ext, sc, steps)));

  FilterConfig elms_k1 = base;
  elms_k1.k_history = 1;
  CHECK(bitwise_equal(trajectory(Algorithm::Elms, elms_k1, sc, steps), trajectory(Algorithm::Glms, base, sc, steps)));
}

TEST_CASE("G = H = 0 freezes the state") {
  const Scenario sc = standard(31, 10, 4, 6, 8);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::Zero;
  cfg.history_gain = HistoryGain::Zero;
  cfg.k_history = 3;
  FilterState st = FilterState::zeros(10);
  st.s_est.setConstant(0.25);
  for (int n = 0; n < 10; ++n) st = ptgelms_step(st, sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n), cfg);
  CHECK(max_abs(st.s_est - Vector::Constant(10, 0.25)) == 0.0);
}

TEST_CASE("history ring buffer keeps K-1 newest pairs") {
  const Scenario sc = standard(32, 10, 4, 6, 8);
  FilterConfig cfg;
  cfg.k_history = 4;
  Filter f(Algorithm::Elms, cfg, 10);
  for (int n = 0; n < 7; ++n) {
    f.update(sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n));
    CHECK(f.state().history.size() == static_cast<std::size_t>(std::min(n + 1, 3)));
  }
  CHECK(max_abs(f.state().history.front().y - observe(sc.op, sc.truth.s_true, sc.noise, 6)) == 0.0);
  CHECK(max_abs(f.state().history.back().y - observe(sc.op, sc.truth.s_true, sc.noise, 4)) == 0.0);
}

TEST_CASE("noise-free consistency: every filter drives the residual to zero") {
  // Wide A with a well-conditioned A A^T.
  const Scenario sc = standard(33, 12, 4, 4, 12, 0.0);
  const Matrix& a = sc.op.composite();
  const double lam = lambda_max_ata(a);
  FilterConfig base;
  base.mu = 0.5 / lam;
  base.noise_cov = Matrix::Zero(4, 4);
  struct Case {
    Algorithm alg;
    GainRule rule;
    HistoryGain hist;
    int k;
  };
  const Case cases[] = {
      {Algorithm::Glms, GainRule::Identity, HistoryGain::Zero, 1},
      {Algorithm::PtGlms, GainRule::Literature, HistoryGain::Zero, 1},
      {Algorithm::PtGlms, GainRule::GmsdOptimal, HistoryGain::Zero, 1},
      {Algorithm::PtGelms, GainRule::GmsdOptimal, HistoryGain::Coupled, 3},
      {Algorithm::Elms, GainRule::Identity, HistoryGain::Identity, 3},
  };
  const Vector y = a * sc.truth.s_true;
  for (const Case& c : cases) {
    FilterConfig cfg = base;
    cfg.gain_rule = c.rule;
    cfg.history_gain = c.hist;
    cfg.k_history = c.k;
    if (c.alg == Algorithm::Elms) cfg.mu = 0.5 / (c.k * lam);
    Filter f(c.alg, cfg, 12);
    for (int n = 0; n < 10000; ++n) f.update(a, y);
    const double res = (a * (sc.truth.s_true - f.state().s_est)).norm();
    INFO("algorithm " << to_string(c.alg) << " rule " << to_string(c.rule));
    CHECK(res < 1e-8);
  }
}

TEST_CASE("divergence raises NonFiniteState and keeps the last finite state") {
  testing::Rand rng(34);
  const Matrix a = rng.gauss_matrix(4, 4);
  const Vector y = rng.gauss_vector(4);
  FilterConfig cfg;
  cfg.mu = 1e150;
  FilterState st = FilterState::zeros(4);
  bool raised = false;
  for (int n = 0; n < 50 && !raised; ++n) {
    const FilterState before = st;
    try {
      advance(st, Algorithm::Glms, a, y, cfg);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteState);
      CHECK(max_abs(st.s_est - before.s_est) == 0.0);
      CHECK(st.s_est.allFinite());
      raised = true;
    }
  }
  CHECK(raised);
}

TEST_CASE("replaying a logged stream reproduces the trajectory") {
  const Scenario sc = standard(35);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.history_gain = HistoryGain::Coupled;
  cfg.k_history = 8;
  cfg.noise_cov = sc.noise.covariance();
  std::vector<Vector> log;
  for (int n = 0; n < 100; ++n) log.push_back(observe(sc.op, sc.truth.s_true, sc.noise, n));
  Filter f1(Algorithm::PtGelms, cfg, 50);
  Filter f2(Algorithm::PtGelms, cfg, 50);
  for (const auto& y : log) f1.update(sc.op.composite(), y);
  for (const auto& y : log) f2.update(sc.op.composite(), y);
  CHECK((f1.state().s_est.array() == f2.state().s_est.array()).all());
}

TEST_CASE("gains respect the clamp bounds") {
  const Scenario sc = standard(36);
  FilterConfig cfg;
  cfg.gain_rule = GainRule::GmsdOptimal;
  cfg.history_gain = HistoryGain::Coupled;
  cfg.k_history = 8;
  cfg.noise_cov = sc.noise.covariance();
  const double cap = std::min(cfg.gain_cap, cfg.step_cap / (cfg.mu * lambda_max_ata(sc.op.composite())));
  Filter f(Algorithm::PtGelms, cfg, 50);
  for (int n = 0; n < 200; ++n) {
    f.update(sc.op.composite(), observe(sc.op, sc.truth.s_true, sc.noise, n));
    CHECK(f.state().g_diag.cwiseAbs().maxCoeff() <= cap * (1.0 + 1e-12));
    CHECK(f.state().h_diag.cwiseAbs().maxCoeff() <= cfg.gain_cap);
    CHECK(f.state().g_diag.allFinite());
  }
}

TEST_CASE("config validation and names") {
  FilterConfig c;
  c.mu = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FilterConfig{};
  c.k_history = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FilterConfig{};
  c.inner_iters = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = FilterConfig{};
  c.history_gain = HistoryGain::Coupled;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_algorithm("ptgelms") == Algorithm::PtGelms);
  CHECK(parse_gain_rule("gmsd_optimal") == GainRule::GmsdOptimal);
  CHECK(parse_history_gain("coupled") == HistoryGain::Coupled);
  CHECK(parse_magnitude("mu_law") == Magnitude::MuLaw);
  CHECK(to_string(GainRule::Literature) == "literature");
  CHECK_THROWS_AS(parse_algorithm("nlms"), Error);
  const Scenario sc = standard(37, 6, 2, 3, 4);
  Filter f(Algorithm::Glms, FilterConfig{}, 6);
  CHECK_THROWS_AS(f.update(sc.op.composite(), Vector::Zero(4)), Error);
}

}  // TEST_SUITE
