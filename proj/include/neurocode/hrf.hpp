#pragma once

#include <vector>

#include <Eigen/Dense>

namespace neurocode::hrf {

/// Canonical double-gamma kernel sampled at t = 0, tr, 2*tr, ...; peak rescaled to 1.
struct HRFKernel {
  std::vector<double> samples;
  double tr_seconds = 1.0;
  double duration_seconds = 32.0;
};

struct DoubleGammaParams {
  double response_shape = 6.0;
  double undershoot_shape = 16.0;
  double dispersion = 1.0;  // gamma scale, seconds
  double undershoot_ratio = 1.0 / 6.0;
};

HRFKernel canonical_hrf(double tr_seconds = 1.0, double duration_seconds = 32.0,
                        const DoubleGammaParams& params = {});

/// Causal convolution of every column with the kernel, truncated to the input length.
Eigen::MatrixXd convolve_hrf(const Eigen::MatrixXd& x, const HRFKernel& kernel);
Eigen::MatrixXd convolve_hrf_serial(const Eigen::MatrixXd& x, const HRFKernel& kernel);

}  // namespace neurocode::hrf
