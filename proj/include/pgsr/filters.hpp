#pragma once

#include <cstdint>
#include <deque>
#include <string_view>

#include "pgsr/types.hpp"

namespace pgsr {

enum class Algorithm { Glms, PtGlms, PtGelms, Elms };

/// Rule producing the diagonal of G[n].
enum class GainRule { Identity, Literature, GmsdOptimal, Zero, Fixed };

/// Rule producing the diagonal of H[n] (history term of the extended update).
enum class HistoryGain { Coupled, Zero, Identity };

/// Magnitude map F[.] used by the literature gains.
enum class Magnitude { Abs, MuLaw };

Algorithm parse_algorithm(std::string_view s);
GainRule parse_gain_rule(std::string_view s);
HistoryGain parse_history_gain(std::string_view s);
Magnitude parse_magnitude(std::string_view s);
std::string_view to_string(Algorithm a) noexcept;
std::string_view to_string(GainRule r) noexcept;
std::string_view to_string(HistoryGain h) noexcept;
std::string_view to_string(Magnitude m) noexcept;

struct FilterConfig {
  double mu = 0.01;
  /// Number of time instants K; the extended update reuses K - 1 past pairs.
  int k_history = 1;
  GainRule gain_rule = GainRule::Identity;
  HistoryGain history_gain = HistoryGain::Zero;

  double rho = 0.01;
  double delta = 0.01;
  Magnitude magnitude = Magnitude::Abs;
  double mu_law_beta = 1000.0;

  /// Added to the GMSD gain denominators. A 0/0 gain (zero residual and
  /// zero noise term on a column) is taken as 0.
  double gain_floor = 0.0;
  /// Hard bound g_max on |g_i| and |h_i| for the GMSD rules.
  double gain_cap = 1e3;
  /// Stability cap: |mu * g_i| * lambda_max(A^T A) <= step_cap, and the
  /// analogous bound for h_i against the history Gram sum. <= 0 disables it.
  double step_cap = 1.0;
  bool nonneg_gains = false;
  int inner_iters = 2;

  /// Diagonal of G for GainRule::Fixed.
  Vector fixed_gains;

  /// Observation noise covariance C_e (M x M). Empty means zero.
  Matrix noise_cov;

  void validate() const;
};

struct HistoryEntry {
  Matrix a;
  Vector y;
  /// lambda_max(a^T a); computed lazily, negative when unknown.
  double lambda_max = -1.0;
};

struct FilterState {
  Vector s_est;
  Vector g_diag;
  Vector h_diag;
  /// Newest first, at most K - 1 entries.
  std::deque<HistoryEntry> history;
  std::int64_t n = 0;

  static FilterState zeros(int n_coeffs);
};

/// Gains before and after clamping. `raw_*` are what the closed-form
/// expressions produced; `g`/`h` are what the update uses.
struct GainResult {
  Vector g;
  Vector h;
  Vector raw_g;
  Vector raw_h;
  int clamped = 0;
};

/// Proportionate gains g_i = gamma_i / mean(gamma) from the current estimate.
Vector literature_gains(const Vector& s_est, const FilterConfig& cfg);

/// Per-node GMSD-minimizing gain for the proportionate update.
GainResult gmsd_gain_ptglms(const FilterState& state, const Matrix& a, const Vector& y,
                            const FilterConfig& cfg);

/// Coupled (g, h) gains for the extended update, using `state.history`.
GainResult gmsd_gains_ptgelms(const FilterState& state, const Matrix& a, const Vector& y,
                              const FilterConfig& cfg);

FilterState glms_step(const FilterState& state, const Matrix& a, const Vector& y,
                      const FilterConfig& cfg);
FilterState ptglms_step(const FilterState& state, const Matrix& a, const Vector& y,
                        const FilterConfig& cfg);
FilterState ptgelms_step(const FilterState& state, const Matrix& a, const Vector& y,
                         const FilterConfig& cfg);
FilterState elms_step(const FilterState& state, const Matrix& a, const Vector& y,
                      const FilterConfig& cfg);

/// In-place update shared by the four step functions. On NonFiniteState the
/// state is left as it was before the call.
void advance(FilterState& state, Algorithm alg, const Matrix& a, const Vector& y,
             const FilterConfig& cfg);

/// Config adjusted so that `alg` runs the update it names: GLMS forces
/// identity gains and K = 1, ELMS forces identity G and H.
FilterConfig canonical_config(Algorithm alg, FilterConfig cfg);

/// Stateful wrapper used by the experiment runner.
class Filter {
 public:
  Filter(Algorithm alg, FilterConfig cfg, int n_coeffs);

  void update(const Matrix& a, const Vector& y) { advance(state_, alg_, a, y, cfg_); }

  const FilterState& state() const noexcept { return state_; }
  const FilterConfig& config() const noexcept { return cfg_; }
  Algorithm algorithm() const noexcept { return alg_; }

 private:
  Algorithm alg_;
  FilterConfig cfg_;
  FilterState state_;
};

}  // namespace pgsr
