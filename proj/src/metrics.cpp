#include "pgsr/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pgsr/error.hpp"

namespace pgsr {

double nmsd(const Vector& s_true, const Vector& s_est) {
  if (s_true.size() != s_est.size()) raise(ErrorCode::DimensionMismatch, "nmsd: length mismatch");
  const double ref = s_true.squaredNorm();
  if (!(ref > 0.0)) raise(ErrorCode::ZeroReference, "nmsd: reference signal has zero norm");
  return (s_true - s_est).squaredNorm() / ref;
}

double gmsd_empirical(const Vector& s_true, const Vector& s_before, const Vector& s_after,
                      const Matrix& a) {
  const auto n = s_true.size();
  if (s_before.size() != n || s_after.size() != n || a.cols() != n) {
    raise(ErrorCode::DimensionMismatch, "gmsd_empirical: inconsistent sizes");
  }
  const Vector e1 = a * (s_true - s_after);
  const Vector e0 = a * (s_true - s_before);
  return e1.squaredNorm() - e0.squaredNorm();
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

NmsdCurve ensemble_mean(const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) raise(ErrorCode::RaggedInput, "ensemble_mean: no curves");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != len) raise(ErrorCode::RaggedInput, "ensemble_mean: curves differ in length");
  }
  const std::size_t k = curves.size();
  NmsdCurve out;
  out.trials = static_cast<int>(k);
  out.values.resize(len);
  out.stderr_values.resize(len);
  std::vector<double> col(k);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < k; ++i) col[i] = curves[i][t];
    const double mean = pairwise_sum(col.data(), k) / static_cast<double>(k);
    out.values[t] = mean;
    if (k > 1) {
      for (std::size_t i = 0; i < k; ++i) col[i] = (curves[i][t] - mean) * (curves[i][t] - mean);
      const double var = pairwise_sum(col.data(), k) / static_cast<double>(k - 1);
      out.stderr_values[t] = std::sqrt(var / static_cast<double>(k));
    } else {
      out.stderr_values[t] = 0.0;
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void write_curve_csv(const NmsdCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "iter,mean_nmsd,stderr\n";
  for (std::size_t t = 0; t < curve.values.size(); ++t) {
    const double se = t < curve.stderr_values.size() ? curve.stderr_values[t] : 0.0;
    out << t << ',' << format_double(curve.values[t]) << ',' << format_double(se) << '\n';
  }
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

NmsdCurve read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  NmsdCurve c;
  std::string line;
  std::getline(in, line);
  if (line.rfind("iter,mean_nmsd,stderr", 0) != 0) raise(ErrorCode::Parse, path.string() + ": bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, d;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, d, ',');
    try {
      c.values.push_back(std::stod(b));
      c.stderr_values.push_back(std::stod(d));
    } catch (const std::exception&) {
      raise(ErrorCode::Parse, path.string() + ": bad row '" + line + "'");
    }
  }
  return c;
}

}  // namespace pgsr
