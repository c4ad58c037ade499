#include "pgsr/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pgsr/error.hpp"
#include "pgsr/random.hpp"

namespace pgsr {

SamplingPolicy parse_sampling_policy(std::string_view s) {
  if (s == "static") return SamplingPolicy::Static;
  if (s == "per_iteration") return SamplingPolicy::PerIteration;
  raise(ErrorCode::Config, "unknown sampling policy '" + std::string(s) + "'");
}

std::string_view to_string(SamplingPolicy p) noexcept {
  return p == SamplingPolicy::Static ? "static" : "per_iteration";
}

SamplingOperator::SamplingOperator(Matrix sensing, Vector selection,
                                   std::shared_ptr<const Matrix> basis, std::uint64_t seed,
                                   SamplingPolicy policy)
    : sensing_(std::move(sensing)),
      selection_(std::move(selection)),
      basis_(std::move(basis)),
      seed_(seed),
      policy_(policy) {
  if (!basis_) raise(ErrorCode::DimensionMismatch, "operator needs a basis");
  const Eigen::Index n = basis_->rows();
  if (sensing_.cols() != n || selection_.size() != n) {
    raise(ErrorCode::DimensionMismatch, "sensing/selection/basis sizes disagree");
  }
  if (sensing_.rows() < 1 || sensing_.rows() > n) {
    raise(ErrorCode::OutOfRange, "measurement count must lie in [1, N]");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (selection_[i] != 0.0 && selection_[i] != 1.0) {
      raise(ErrorCode::OutOfRange, "selection entries must be 0 or 1");
    }
  }
  composite_ = sensing_ * selection_.asDiagonal() * (*basis_);
}

int SamplingOperator::band_rank(int bandwidth) const {
  const int f = std::clamp(bandwidth, 0, n());
  if (f == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(composite_.leftCols(f));
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

double SamplingOperator::composite_residual() const {
  const Matrix again = sensing_ * selection_.asDiagonal() * (*basis_);
  return (again - composite_).cwiseAbs().maxCoeff();
}

NoiseModel NoiseModel::isotropic(int m, double variance, std::uint64_t seed) {
  if (variance < 0.0) raise(ErrorCode::OutOfRange, "noise variance must be nonnegative");
  return NoiseModel{Vector::Constant(m, variance), seed};
}

namespace {

Vector draw_selection(Stream& rng, int n, int s_count) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates; the first s_count entries are the chosen nodes.
  for (int k = 0; k < s_count; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng.engine())]);
  }
  Vector sel = Vector::Zero(n);
  for (int k = 0; k < s_count; ++k) sel[idx[k]] = 1.0;
  return sel;
}

Matrix draw_sensing(Stream& rng, int m, int n) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix b(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) b(i, j) = rng.gaussian(0.0, sd);
  return b;
}

struct Draw {
  Matrix sensing;
  Vector selection;
};

Draw draw_operator(std::uint64_t key, int m, int n, int s_count, bool identity_sensing) {
  Stream sel_rng(stream_seed(key, "selection"));
  Stream b_rng(stream_seed(key, "sensing"));
  Draw d;
  d.selection = draw_selection(sel_rng, n, s_count);
  d.sensing = identity_sensing ? Matrix::Identity(m, n) : draw_sensing(b_rng, m, n);
  return d;
}

}  // namespace

SamplingOperator make_operator(std::shared_ptr<const Matrix> basis, int m, int s_count,
                               std::uint64_t seed, const OperatorOptions& opts) {
  if (!basis) raise(ErrorCode::DimensionMismatch, "null basis");
  const int n = static_cast<int>(basis->rows());
  if (m < 1 || m > n) raise(ErrorCode::OutOfRange, "m must lie in [1, N]");
  if (s_count < 1 || s_count > n) raise(ErrorCode::OutOfRange, "s_count must lie in [1, N]");
  if (opts.identity_sensing && m != n) raise(ErrorCode::OutOfRange, "identity sensing needs m == N");
  Draw d = draw_operator(seed, m, n, s_count, opts.identity_sensing);
  return SamplingOperator(std::move(d.sensing), std::move(d.selection), std::move(basis), seed,
                          opts.policy);
}

SamplingOperator make_operator(const GftBasis& basis, int m, int s_count, std::uint64_t seed,
                               const OperatorOptions& opts) {
  return make_operator(std::make_shared<const Matrix>(basis.eigenvectors), m, s_count, seed, opts);
}

Vector draw_noise(const NoiseModel& noise, std::int64_t n) {
  Stream rng(counter_seed(noise.seed, static_cast<std::uint64_t>(n)));
  Vector e(noise.variances.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double var = noise.variances[i];
    e[i] = var > 0.0 ? rng.gaussian(0.0, std::sqrt(var)) : 0.0;
  }
  return e;
}

Vector observe(const SamplingOperator& op, const Vector& s_true, const NoiseModel& noise,
               std::int64_t n) {
  if (s_true.size() != op.n()) raise(ErrorCode::DimensionMismatch, "observe: signal length");
  if (noise.variances.size() != op.m()) raise(ErrorCode::DimensionMismatch, "observe: noise size");
  return op.composite() * s_true + draw_noise(noise, n);
}

SamplingOperator resample(const SamplingOperator& op, std::int64_t n) {
  if (op.policy() == SamplingPolicy::Static) return op;
  const std::uint64_t key = counter_seed(op.seed(), static_cast<std::uint64_t>(n));
  const bool identity = op.sensing().isIdentity(0.0);
  Draw d = draw_operator(key, op.m(), op.n(), op.s_count(), identity);
  return SamplingOperator(std::move(d.sensing), std::move(d.selection), op.basis(), op.seed(),
                          op.policy());
}

namespace {

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j) out << ',';
    out << row[j];
  }
  out << '\n';
}

std::vector<double> read_row(std::istream& in, const std::string& where) {
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::Parse, where + ": truncated operator dump");
  std::vector<double> v;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
  return v;
}

}  // namespace

void save_operator_csv(const SamplingOperator& op, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out.precision(17);
  out << "# M,N,S\n" << op.m() << ',' << op.n() << ',' << op.s_count() << '\n';
  write_row(out, op.selection().transpose());
  for (int i = 0; i < op.m(); ++i) write_row(out, op.sensing().row(i));
  for (int i = 0; i < op.m(); ++i) write_row(out, op.composite().row(i));
}

OperatorDump load_operator_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const std::string where = path.string();
  const auto dims = read_row(in, where);
  if (dims.size() != 3) raise(ErrorCode::Parse, where + ": bad dimension row");
  const int m = static_cast<int>(dims[0]);
  const int n = static_cast<int>(dims[1]);
  OperatorDump d;
  auto sel = read_row(in, where);
  if (static_cast<int>(sel.size()) != n) raise(ErrorCode::Parse, where + ": selection length");
  d.selection = Eigen::Map<Vector>(sel.data(), n);
  d.sensing.resize(m, n);
  d.composite.resize(m, n);
  for (int i = 0; i < m; ++i) {
    auto r = read_row(in, where);
    if (static_cast<int>(r.size()) != n) raise(ErrorCode::Parse, where + ": sensing row");
    d.sensing.row(i) = Eigen::Map<Eigen::RowVectorXd>(r.data(), n);
  }
  for (int i = 0; i < m; ++i) {
    auto r = read_row(in, where);
    if (static_cast<int>(r.size()) != n) raise(ErrorCode::Parse, where + ": composite row");
    d.composite.row(i) = Eigen::Map<Eigen::RowVectorXd>(r.data(), n);
  }
  if (static_cast<int>(d.selection.sum()) != static_cast<int>(dims[2])) {
    raise(ErrorCode::Parse, where + ": selection count disagrees with header");
  }
  return d;
}

}  // namespace pgsr
