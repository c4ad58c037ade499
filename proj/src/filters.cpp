#include "pgsr/filters.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pgsr/error.hpp"

namespace pgsr {

Algorithm parse_algorithm(std::string_view s) {
  if (s == "glms") return Algorithm::Glms;
  if (s == "ptglms") return Algorithm::PtGlms;
  if (s == "ptgelms") return Algorithm::PtGelms;
  if (s == "elms") return Algorithm::Elms;
  raise(ErrorCode::Config, "unknown algorithm '" + std::string(s) + "'");
}

GainRule parse_gain_rule(std::string_view s) {
  if (s == "identity") return GainRule::Identity;
  if (s == "literature") return GainRule::Literature;
  if (s == "gmsd_optimal") return GainRule::GmsdOptimal;
  if (s == "zero") return GainRule::Zero;
  if (s == "fixed") return GainRule::Fixed;
  raise(ErrorCode::Config, "unknown gain rule '" + std::string(s) + "'");
}

HistoryGain parse_history_gain(std::string_view s) {
  if (s == "coupled") return HistoryGain::Coupled;
  if (s == "zero") return HistoryGain::Zero;
  if (s == "identity") return HistoryGain::Identity;
  raise(ErrorCode::Config, "unknown history gain '" + std::string(s) + "'");
}

Magnitude parse_magnitude(std::string_view s) {
  if (s == "abs") return Magnitude::Abs;
  if (s == "mu_law") return Magnitude::MuLaw;
  raise(ErrorCode::Config, "unknown magnitude map '" + std::string(s) + "'");
}

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::Glms: return "glms";
    case Algorithm::PtGlms: return "ptglms";
    case Algorithm::PtGelms: return "ptgelms";
    case Algorithm::Elms: return "elms";
  }
  return "?";
}

std::string_view to_string(GainRule r) noexcept {
  switch (r) {
    case GainRule::Identity: return "identity";
    case GainRule::Literature: return "literature";
    case GainRule::GmsdOptimal: return "gmsd_optimal";
    case GainRule::Zero: return "zero";
    case GainRule::Fixed: return "fixed";
  }
  return "?";
}

std::string_view to_string(HistoryGain h) noexcept {
  switch (h) {
    case HistoryGain::Coupled: return "coupled";
    case HistoryGain::Zero: return "zero";
    case HistoryGain::Identity: return "identity";
  }
  return "?";
}

std::string_view to_string(Magnitude m) noexcept {
  return m == Magnitude::Abs ? "abs" : "mu_law";
}

void FilterConfig::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) raise(ErrorCode::Config, "mu must be positive");
  if (k_history < 1) raise(ErrorCode::Config, "k_history must be >= 1");
  if (inner_iters < 1) raise(ErrorCode::Config, "inner_iters must be >= 1");
  if (!(rho > 0.0 && rho <= 1.0)) raise(ErrorCode::Config, "rho must lie in (0, 1]");
  if (!(delta > 0.0)) raise(ErrorCode::Config, "delta must be positive");
  if (gain_floor < 0.0) raise(ErrorCode::Config, "gain_floor must be >= 0");
  if (!(gain_cap > 0.0)) raise(ErrorCode::Config, "gain_cap must be positive");
  if (noise_cov.size() != 0 && noise_cov.rows() != noise_cov.cols()) {
    raise(ErrorCode::Config, "noise covariance must be square");
  }
  if (gain_rule == GainRule::Fixed && fixed_gains.size() == 0) {
    raise(ErrorCode::Config, "gain_rule = fixed needs fixed_gains");
  }
  if (history_gain == HistoryGain::Coupled && gain_rule != GainRule::GmsdOptimal) {
    raise(ErrorCode::Config, "coupled history gains require gain_rule = gmsd_optimal");
  }
}

FilterState FilterState::zeros(int n_coeffs) {
  FilterState s;
  s.s_est = Vector::Zero(n_coeffs);
  s.g_diag = Vector::Ones(n_coeffs);
  s.h_diag = Vector::Zero(n_coeffs);
  return s;
}

namespace {

constexpr double kZeroResidual = 1e-14;

double magnitude(double v, const FilterConfig& cfg) {
  const double a = std::abs(v);
  return cfg.magnitude == Magnitude::Abs ? a : std::log1p(cfg.mu_law_beta * a);
}

double lambda_max_gram(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Matrix gram = a.rows() <= a.cols() ? Matrix(a * a.transpose()) : Matrix(a.transpose() * a);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

// A_i^T C_e B_i for every column i.
Vector column_quadratic(const Matrix& a, const Matrix& b, const Matrix& cov) {
  if (cov.size() == 0) return Vector::Zero(a.cols());
  if (cov.rows() != a.rows()) raise(ErrorCode::DimensionMismatch, "noise covariance size");
  return (a.array() * (cov * b).array()).colwise().sum().transpose();
}

// Effective |g| bound: min(g_max, step_cap / (mu * lambda)).
double effective_cap(const FilterConfig& cfg, double lambda) {
  double cap = cfg.gain_cap;
  if (cfg.step_cap > 0.0 && lambda > 0.0) cap = std::min(cap, cfg.step_cap / (cfg.mu * lambda));
  return cap;
}

double clamp_gain(double v, double cap, bool nonneg, int& clamped) {
  const double lo = nonneg ? 0.0 : -cap;
  if (std::isnan(v)) {
    ++clamped;
    return 0.0;
  }
  if (!std::isfinite(v)) {
    ++clamped;
    return v > 0.0 ? cap : lo;
  }
  if (v > cap) {
    ++clamped;
    return cap;
  }
  if (v < lo) {
    ++clamped;
    return lo;
  }
  return v;
}

// Closed-form proportionate gain for one node; shared by both GMSD rules so
// that the h = 0 reduction is bitwise.
inline double data_term(double mu, double p, double nu) { return mu * (p * p - nu); }
inline double unit_gain(double c1, double m1, double col_energy, double eps) {
  return c1 / (m1 * m1 * col_energy + eps);
}

double lambda_for(const FilterState& st, const Matrix& a) {
  if (!st.history.empty()) {
    const HistoryEntry& h = st.history.front();
    if (h.lambda_max >= 0.0 && h.a.rows() == a.rows() && h.a.cols() == a.cols() && h.a == a) {
      return h.lambda_max;
    }
  }
  return lambda_max_gram(a);
}

void check_dims(const FilterState& st, const Matrix& a, const Vector& y) {
  if (a.cols() != st.s_est.size() || a.rows() != y.size()) {
    raise(ErrorCode::DimensionMismatch, "A is " + std::to_string(a.rows()) + "x" +
                                            std::to_string(a.cols()) + ", y has " +
                                            std::to_string(y.size()) + ", state has " +
                                            std::to_string(st.s_est.size()));
  }
}

GainResult ptglms_gains_impl(const Matrix& a, const Vector& residual, const FilterConfig& cfg,
                             double lambda) {
  const Eigen::Index n = a.cols();
  const Vector p = a.transpose() * residual;
  const Vector nu = column_quadratic(a, a, cfg.noise_cov);
  const Vector col_energy = a.colwise().squaredNorm().transpose();
  const double cap = effective_cap(cfg, lambda);
  GainResult r;
  r.raw_g.resize(n);
  r.g.resize(n);
  r.raw_h = Vector::Zero(n);
  r.h = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = cfg.mu * p[i];
    r.raw_g[i] = unit_gain(data_term(cfg.mu, p[i], nu[i]), m, col_energy[i], cfg.gain_floor);
    r.g[i] = clamp_gain(r.raw_g[i], cap, cfg.nonneg_gains, r.clamped);
  }
  return r;
}

std::size_t history_len(const FilterState& st, int k_history) {
  return std::min<std::size_t>(st.history.size(), static_cast<std::size_t>(k_history - 1));
}

double history_lambda(const FilterState& st, std::size_t len) {
  // Upper bound on lambda_max(sum_j A_j^T A_j).
  double total = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    const auto& h = st.history[j];
    total += h.lambda_max >= 0.0 ? h.lambda_max : lambda_max_gram(h.a);
  }
  return total;
}

struct HistorySums {
  std::size_t len = 0;
  Vector ext;           // sum_j A_j^T e_j
  Vector residual_sum;  // sum_j e_j
  Matrix a_sum;         // sum_j A_j
  bool quiet = true;    // every e_j below the zero-residual threshold
};

HistorySums history_sums(const FilterState& st, const Matrix& a, std::size_t len, bool cross) {
  HistorySums hs;
  hs.len = len;
  if (len == 0) return hs;
  hs.ext = Vector::Zero(a.cols());
  if (cross) {
    hs.residual_sum = Vector::Zero(a.rows());
    hs.a_sum = Matrix::Zero(a.rows(), a.cols());
  }
  for (std::size_t j = 0; j < len; ++j) {
    const auto& h = st.history[j];
    if (h.a.rows() != a.rows() || h.a.cols() != a.cols()) {
      raise(ErrorCode::DimensionMismatch, "history operator shape changed");
    }
    const Vector ej = h.y - h.a * st.s_est;
    if (ej.norm() >= kZeroResidual) hs.quiet = false;
    hs.ext.noalias() += h.a.transpose() * ej;
    if (cross) {
      hs.residual_sum += ej;
      hs.a_sum += h.a;
    }
  }
  return hs;
}

GainResult ptgelms_gains_impl(const FilterState& st, const Matrix& a, const Vector& residual,
                              const HistorySums& hs, const FilterConfig& cfg, HistoryGain mode,
                              double lambda) {
  if (hs.len == 0) return ptglms_gains_impl(a, residual, cfg, lambda);

  const Eigen::Index n = a.cols();
  const Vector p = a.transpose() * residual;
  const Vector nu = column_quadratic(a, a, cfg.noise_cov);
  const Vector col_energy = a.colwise().squaredNorm().transpose();
  const bool coupled = mode == HistoryGain::Coupled;
  Vector q;
  Vector nu_cross;
  if (coupled) {
    q = a.transpose() * hs.residual_sum;
    nu_cross = column_quadratic(a, hs.a_sum, cfg.noise_cov);
  }

  const double g_cap = effective_cap(cfg, lambda);
  const double h_cap = coupled ? effective_cap(cfg, history_lambda(st, hs.len)) : 0.0;

  GainResult r;
  r.raw_g.resize(n);
  r.raw_h.resize(n);
  r.g.resize(n);
  r.h.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m1 = cfg.mu * p[i];
    const double c1 = data_term(cfg.mu, p[i], nu[i]);
    const double energy = col_energy[i];
    double g = unit_gain(c1, m1, energy, cfg.gain_floor);
    double h = mode == HistoryGain::Identity ? 1.0 : 0.0;
    if (coupled) {
      // Alternate the two stationarity conditions, starting from h = 0.
      const double m2 = cfg.mu * hs.ext[i];
      const double c2 = cfg.mu * (p[i] * q[i] - nu_cross[i]);
      const double coupling = m1 * m2 * energy;
      for (int pass = 0; pass < cfg.inner_iters; ++pass) {
        if (pass > 0) g = (c1 - h * coupling) / (m1 * m1 * energy + cfg.gain_floor);
        h = (c2 - g * coupling) / (m2 * m2 * energy + cfg.gain_floor);
      }
    }
    r.raw_g[i] = g;
    r.raw_h[i] = h;
    r.g[i] = clamp_gain(g, g_cap, cfg.nonneg_gains, r.clamped);
    r.h[i] = coupled ? clamp_gain(h, h_cap, cfg.nonneg_gains, r.clamped) : h;
  }
  return r;
}

bool needs_lambda(const FilterConfig& cfg) {
  return cfg.gain_rule == GainRule::GmsdOptimal && cfg.step_cap > 0.0;
}

struct Rules {
  GainRule gain;
  HistoryGain history;
  int k;
};

Rules rules_for(Algorithm alg, const FilterConfig& cfg) {
  switch (alg) {
    case Algorithm::Glms: return {GainRule::Identity, HistoryGain::Zero, 1};
    case Algorithm::PtGlms: return {cfg.gain_rule, HistoryGain::Zero, 1};
    case Algorithm::Elms: return {GainRule::Identity, HistoryGain::Identity, cfg.k_history};
    case Algorithm::PtGelms: return {cfg.gain_rule, cfg.history_gain, cfg.k_history};
  }
  return {GainRule::Identity, HistoryGain::Zero, 1};
}

void push_history(FilterState& st, const Matrix& a, const Vector& y, double lambda, int k) {
  if (k <= 1) return;
  st.history.push_front(HistoryEntry{a, y, lambda});
  while (st.history.size() > static_cast<std::size_t>(k - 1)) st.history.pop_back();
}

Vector fixed_gain_vector(const FilterConfig& cfg, Eigen::Index n) {
  if (cfg.fixed_gains.size() != n) {
    raise(ErrorCode::DimensionMismatch, "fixed_gains has " + std::to_string(cfg.fixed_gains.size()) +
                                            " entries for " + std::to_string(n) + " coefficients");
  }
  return cfg.fixed_gains;
}

void commit(FilterState& st, Vector next) {
  if (!next.allFinite()) {
    raise(ErrorCode::NonFiniteState, "estimate diverged at n = " + std::to_string(st.n));
  }
  st.s_est = std::move(next);
}

}  // namespace

Vector literature_gains(const Vector& s_est, const FilterConfig& cfg) {
  const Eigen::Index n = s_est.size();
  Vector f(n);
  for (Eigen::Index i = 0; i < n; ++i) f[i] = magnitude(s_est[i], cfg);
  const double gamma_min = std::max(cfg.delta, n > 0 ? f.maxCoeff() : 0.0);
  Vector gamma(n);
  for (Eigen::Index i = 0; i < n; ++i) gamma[i] = std::max(cfg.rho * gamma_min, f[i]);
  return gamma / gamma.mean();
}

GainResult gmsd_gain_ptglms(const FilterState& state, const Matrix& a, const Vector& y,
                            const FilterConfig& cfg) {
  check_dims(state, a, y);
  const double lambda = needs_lambda(cfg) ? lambda_max_gram(a) : 0.0;
  return ptglms_gains_impl(a, y - a * state.s_est, cfg, lambda);
}

GainResult gmsd_gains_ptgelms(const FilterState& state, const Matrix& a, const Vector& y,
                              const FilterConfig& cfg) {
  check_dims(state, a, y);
  const double lambda = cfg.step_cap > 0.0 ? lambda_max_gram(a) : 0.0;
  const std::size_t len = history_len(state, cfg.k_history);
  const bool coupled = cfg.history_gain == HistoryGain::Coupled;
  const HistorySums hs = history_sums(state, a, len, coupled);
  return ptgelms_gains_impl(state, a, y - a * state.s_est, hs, cfg, cfg.history_gain, lambda);
}

void advance(FilterState& st, Algorithm alg, const Matrix& a, const Vector& y,
             const FilterConfig& cfg) {
  check_dims(st, a, y);
  const Rules rules = rules_for(alg, cfg);
  const Vector residual = y - a * st.s_est;
  const Vector grad = a.transpose() * residual;

  if (alg == Algorithm::Glms) {
    commit(st, st.s_est + cfg.mu * grad);
    ++st.n;
    return;
  }

  const bool gmsd = rules.gain == GainRule::GmsdOptimal;
  const double lambda = gmsd && cfg.step_cap > 0.0 ? lambda_for(st, a) : -1.0;

  if (alg == Algorithm::PtGlms) {
    if (gmsd && residual.norm() < kZeroResidual) {
      ++st.n;
      return;
    }
    Vector g;
    switch (rules.gain) {
      case GainRule::Identity: g = Vector::Ones(grad.size()); break;
      case GainRule::Literature: g = literature_gains(st.s_est, cfg); break;
      case GainRule::GmsdOptimal: g = ptglms_gains_impl(a, residual, cfg, lambda).g; break;
      case GainRule::Zero: g = Vector::Zero(grad.size()); break;
      case GainRule::Fixed: g = fixed_gain_vector(cfg, grad.size()); break;
    }
    commit(st, st.s_est + cfg.mu * g.cwiseProduct(grad));
    st.g_diag = std::move(g);
    ++st.n;
    return;
  }

  // Extended update: current term plus reuse of the K - 1 newest pairs.
  const std::size_t len = history_len(st, rules.k);
  const bool use_history = len > 0 && rules.history != HistoryGain::Zero;
  const HistorySums hs =
      history_sums(st, a, use_history ? len : 0, gmsd && rules.history == HistoryGain::Coupled);

  if (gmsd && residual.norm() < kZeroResidual && hs.quiet) {
    push_history(st, a, y, lambda, rules.k);
    ++st.n;
    return;
  }

  Vector g;
  Vector h = Vector::Zero(grad.size());
  switch (rules.gain) {
    case GainRule::Identity: g = Vector::Ones(grad.size()); break;
    case GainRule::Literature: g = literature_gains(st.s_est, cfg); break;
    case GainRule::GmsdOptimal: {
      GainResult r = ptgelms_gains_impl(st, a, residual, hs, cfg, rules.history, lambda);
      g = std::move(r.g);
      if (rules.history == HistoryGain::Coupled) h = std::move(r.h);
      break;
    }
    case GainRule::Zero: g = Vector::Zero(grad.size()); break;
    case GainRule::Fixed: g = fixed_gain_vector(cfg, grad.size()); break;
  }
  if (rules.history == HistoryGain::Identity) h.setOnes();

  Vector next = st.s_est + cfg.mu * g.cwiseProduct(grad);
  if (use_history) next += cfg.mu * h.cwiseProduct(hs.ext);
  commit(st, std::move(next));
  st.g_diag = std::move(g);
  st.h_diag = std::move(h);
  push_history(st, a, y, lambda, rules.k);
  ++st.n;
}

FilterState glms_step(const FilterState& state, const Matrix& a, const Vector& y,
                      const FilterConfig& cfg) {
  FilterState next = state;
  advance(next, Algorithm::Glms, a, y, cfg);
  return next;
}

FilterState ptglms_step(const FilterState& state, const Matrix& a, const Vector& y,
                        const FilterConfig& cfg) {
  FilterState next = state;
  advance(next, Algorithm::PtGlms, a, y, cfg);
  return next;
}

FilterState ptgelms_step(const FilterState& state, const Matrix& a, const Vector& y,
                         const FilterConfig& cfg) {
  FilterState next = state;
  advance(next, Algorithm::PtGelms, a, y, cfg);
  return next;
}

FilterState elms_step(const FilterState& state, const Matrix& a, const Vector& y,
                      const FilterConfig& cfg) {
  FilterState next = state;
  advance(next, Algorithm::Elms, a, y, cfg);
  return next;
}

FilterConfig canonical_config(Algorithm alg, FilterConfig cfg) {
  const Rules r = rules_for(alg, cfg);
  cfg.gain_rule = r.gain;
  cfg.history_gain = r.history;
  cfg.k_history = r.k;
  return cfg;
}

Filter::Filter(Algorithm alg, FilterConfig cfg, int n_coeffs)
    : alg_(alg), cfg_(canonical_config(alg, std::move(cfg))), state_(FilterState::zeros(n_coeffs)) {
  cfg_.validate();
}

}  // namespace pgsr
