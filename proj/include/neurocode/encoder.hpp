#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurocode/lasso.hpp"
#include "neurocode/sdl.hpp"

namespace neurocode::encoder {

/// t x N voxel time series for one subject.
struct VoxelMatrix {
  Eigen::MatrixXd values;
  std::string subject_id;
};

struct EncodingResult {
  Eigen::MatrixXd coefficients;      // k x N
  std::vector<double> per_voxel_r2;  // NaN = undefined (constant voxel)
  double lambda_fmri = 0.0;
  std::string subject_id;
  std::size_t kkt_checked = 0;
  std::size_t kkt_failures = 0;
  double kkt_max_violation = 0.0;
};

struct EncodeOptions {
  bool standardize = true;
  std::size_t kkt_stride = 100;  // certify every stride-th voxel (about 1%)
  lasso::SolverOptions solver{};
};

/// Independent LASSO fit per voxel (OpenMP over voxels).
EncodingResult encode_voxels(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda_fmri,
                             const EncodeOptions& options = {});
EncodingResult encode_voxels_serial(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda_fmri,
                                    const EncodeOptions& options = {});

struct WelchResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  double degrees_of_freedom = 0.0;
};

/// Welch two-sample t-test on subject-level summaries (e.g. median R^2).
WelchResult compare_r2_distributions(std::span<const double> r2_a, std::span<const double> r2_b);

}  // namespace neurocode::encoder
