#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace neurocode::column_stats {

/// Columns shifted to zero mean and scaled to unit population variance.
/// Zero-variance columns come back as all zeros with kept[j] == false.
struct Standardized {
  Eigen::MatrixXd values;
  std::vector<bool> kept;
  std::vector<double> means;
  std::vector<double> stddevs;

  std::size_t kept_count() const;
};

bool has_zero_variance(const Eigen::Ref<const Eigen::VectorXd>& column);

Standardized standardize_columns(const Eigen::MatrixXd& x);

/// R^2_j = 1 - ||x_j - fit_j||^2 / ||x_j - mean(x_j)||^2; NaN marks a
/// zero-variance (undefined) column.
std::vector<double> column_r2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& fitted);

std::vector<double> defined_values(std::span<const double> values);

/// Median over non-NaN entries; NaN if there are none.
double median_of_defined(std::span<const double> values);

double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

}  // namespace neurocode::column_stats
