#include "neurocode/hrf.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/gamma.hpp>

#include "neurocode/error.hpp"

namespace neurocode::hrf {

namespace {

void convolve_column(const Eigen::MatrixXd& x, const std::vector<double>& kernel, Eigen::Index col,
                     Eigen::MatrixXd& out) {
  const Eigen::Index t = x.rows();
  const auto len = static_cast<Eigen::Index>(kernel.size());
  for (Eigen::Index s = 0; s < t; ++s) {
    double acc = 0.0;
    const Eigen::Index reach = std::min(s + 1, len);
    for (Eigen::Index u = 0; u < reach; ++u) acc += kernel[static_cast<std::size_t>(u)] * x(s - u, col);
    out(s, col) = acc;
  }
}

void check_inputs(const Eigen::MatrixXd& x, const HRFKernel& kernel) {
  if (x.size() == 0) throw Error(ErrorKind::invalid_argument, "cannot convolve an empty matrix");
  if (kernel.samples.empty()) throw Error(ErrorKind::invalid_argument, "empty HRF kernel");
}

}  // namespace

HRFKernel canonical_hrf(double tr_seconds, double duration_seconds, const DoubleGammaParams& p) {
  if (!(tr_seconds > 0.0) || !std::isfinite(tr_seconds)) {
    throw Error(ErrorKind::invalid_argument, "HRF tr must be positive");
  }
  if (!(duration_seconds >= tr_seconds) || !std::isfinite(duration_seconds)) {
    throw Error(ErrorKind::invalid_argument, "HRF duration must be at least one TR");
  }
  const boost::math::gamma_distribution<double> response(p.response_shape, p.dispersion);
  const boost::math::gamma_distribution<double> undershoot(p.undershoot_shape, p.dispersion);

  // The small epsilon keeps 32/1 -> 32 samples despite rounding in the division.
  const auto count = static_cast<std::size_t>(std::floor(duration_seconds / tr_seconds + 1e-9));
  HRFKernel kernel{std::vector<double>(count), tr_seconds, duration_seconds};
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) * tr_seconds;
    kernel.samples[i] = boost::math::pdf(response, t) - p.undershoot_ratio * boost::math::pdf(undershoot, t);
  }
  const double peak = *std::max_element(kernel.samples.begin(), kernel.samples.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::degenerate, "HRF kernel has no positive lobe at this TR");
  for (double& v : kernel.samples) v /= peak;
  return kernel;
}

Eigen::MatrixXd convolve_hrf(const Eigen::MatrixXd& x, const HRFKernel& kernel) {
  check_inputs(x, kernel);
  Eigen::MatrixXd out(x.rows(), x.cols());
  const Eigen::Index cols = x.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < cols; ++c) convolve_column(x, kernel.samples, c, out);
  return out;
}

Eigen::MatrixXd convolve_hrf_serial(const Eigen::MatrixXd& x, const HRFKernel& kernel) {
  check_inputs(x, kernel);
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) convolve_column(x, kernel.samples, c, out);
  return out;
}

}  // namespace neurocode::hrf
