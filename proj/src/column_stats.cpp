#include "neurocode/column_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neurocode/error.hpp"

namespace neurocode::column_stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double population_sd(const Eigen::Ref<const Eigen::VectorXd>& c, double mean) {
  return std::sqrt((c.array() - mean).square().sum() / static_cast<double>(c.size()));
}

}  // namespace

std::size_t Standardized::kept_count() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
}

bool has_zero_variance(const Eigen::Ref<const Eigen::VectorXd>& column) {
  if (column.size() == 0) return true;
  const double mean = column.mean();
  const double scale = std::max(1.0, column.cwiseAbs().maxCoeff());
  return population_sd(column, mean) <= 1e-12 * scale;
}

Standardized standardize_columns(const Eigen::MatrixXd& x) {
  Standardized out;
  out.values = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  out.kept.assign(static_cast<std::size_t>(x.cols()), false);
  out.means.assign(static_cast<std::size_t>(x.cols()), 0.0);
  out.stddevs.assign(static_cast<std::size_t>(x.cols()), 0.0);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j);
    const double mean = col.mean();
    const auto idx = static_cast<std::size_t>(j);
    out.means[idx] = mean;
    if (has_zero_variance(col)) continue;
    const double sd = population_sd(col, mean);
    out.stddevs[idx] = sd;
    out.kept[idx] = true;
    out.values.col(j) = (col.array() - mean) / sd;
  }
  return out;
}

std::vector<double> column_r2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& fitted) {
  if (x.rows() != fitted.rows() || x.cols() != fitted.cols()) {
    throw Error(ErrorKind::shape_mismatch, "R^2 needs matching observed/fitted shapes");
  }
  std::vector<double> r2(static_cast<std::size_t>(x.cols()), kNaN);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (has_zero_variance(x.col(j))) continue;
    const double ss_tot = (x.col(j).array() - x.col(j).mean()).square().sum();
    const double ss_res = (x.col(j) - fitted.col(j)).squaredNorm();
    r2[static_cast<std::size_t>(j)] = 1.0 - ss_res / ss_tot;
  }
  return r2;
}

std::vector<double> defined_values(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) {
    if (!std::isnan(v)) out.push_back(v);
  }
  return out;
}

double median_of_defined(std::span<const double> values) {
  auto v = defined_values(values);
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size() || a.size() == 0) {
    throw Error(ErrorKind::shape_mismatch, "correlation needs equal-length non-empty vectors");
  }
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (!(denom > 0.0)) return kNaN;
  return std::clamp((da * db).sum() / denom, -1.0, 1.0);
}

}  // namespace neurocode::column_stats
