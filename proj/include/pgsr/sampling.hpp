#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>

#include "pgsr/graph.hpp"
#include "pgsr/types.hpp"

namespace pgsr {

enum class SamplingPolicy { Static, PerIteration };

SamplingPolicy parse_sampling_policy(std::string_view s);
std::string_view to_string(SamplingPolicy p) noexcept;

/// Compressive observation map: composite = sensing * diag(selection) * U.
///
/// The basis is held by shared pointer so that resampling can rebuild the
/// composite without the caller threading U through again.
class SamplingOperator {
 public:
  SamplingOperator(Matrix sensing, Vector selection, std::shared_ptr<const Matrix> basis,
                   std::uint64_t seed, SamplingPolicy policy = SamplingPolicy::Static);

  const Matrix& sensing() const noexcept { return sensing_; }
  const Vector& selection() const noexcept { return selection_; }
  const Matrix& composite() const noexcept { return composite_; }
  const std::shared_ptr<const Matrix>& basis() const noexcept { return basis_; }
  int m() const noexcept { return static_cast<int>(sensing_.rows()); }
  int n() const noexcept { return static_cast<int>(sensing_.cols()); }
  int s_count() const noexcept { return static_cast<int>(selection_.sum()); }
  std::uint64_t seed() const noexcept { return seed_; }
  SamplingPolicy policy() const noexcept { return policy_; }

  /// Rank of the composite restricted to its first `bandwidth` columns.
  int band_rank(int bandwidth) const;

  /// Max abs deviation of the stored composite from B*diag(sel)*U.
  double composite_residual() const;

 private:
  Matrix sensing_;
  Vector selection_;
  std::shared_ptr<const Matrix> basis_;
  Matrix composite_;
  std::uint64_t seed_;
  SamplingPolicy policy_;
};

/// e ~ N(0, diag(variances)) in observation space.
struct NoiseModel {
  Vector variances;
  std::uint64_t seed = 0;

  static NoiseModel isotropic(int m, double variance, std::uint64_t seed);
  Matrix covariance() const { return variances.asDiagonal(); }
};

struct OperatorOptions {
  SamplingPolicy policy = SamplingPolicy::Static;
  /// Replace B with the M x N identity (requires m == N).
  bool identity_sensing = false;
};

/// Random node subset of size s_count and B entries i.i.d. N(0, 1/m).
SamplingOperator make_operator(const GftBasis& basis, int m, int s_count, std::uint64_t seed,
                               const OperatorOptions& opts = {});

/// Same, reusing an already shared basis matrix.
SamplingOperator make_operator(std::shared_ptr<const Matrix> basis, int m, int s_count,
                               std::uint64_t seed, const OperatorOptions& opts = {});

/// y[n] = A s + e[n]; e[n] is keyed on (noise.seed, n) only.
Vector observe(const SamplingOperator& op, const Vector& s_true, const NoiseModel& noise,
               std::int64_t n);

/// Noise draw used by observe(); exposed for statistical tests.
Vector draw_noise(const NoiseModel& noise, std::int64_t n);

/// Static policy returns the input unchanged. PerIteration regenerates B and
/// the selection from the (seed, n) key.
SamplingOperator resample(const SamplingOperator& op, std::int64_t n);

/// CSV dump: header `# M,N,S` line followed by `M,N,S` values, then
/// `selection` row, then M sensing rows, then M composite rows. Row-major,
/// `%.17g` formatting.
void save_operator_csv(const SamplingOperator& op, const std::filesystem::path& path);

struct OperatorDump {
  Matrix sensing;
  Vector selection;
  Matrix composite;
};
OperatorDump load_operator_csv(const std::filesystem::path& path);

}  // namespace pgsr
