#include "neurocode/encoder.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "neurocode/column_stats.hpp"
#include "neurocode/error.hpp"

namespace neurocode::encoder {

namespace {

struct Prepared {
  Eigen::MatrixXd y;
  Eigen::MatrixXd correlations;  // k x N, D^T y
};

Prepared prepare(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda, const EncodeOptions& options) {
  if (s.values.rows() != d.atoms.rows()) {
    throw Error(ErrorKind::shape_mismatch, "voxel matrix has " + std::to_string(s.values.rows()) +
                                               " rows but the dictionary has " +
                                               std::to_string(d.atoms.rows()));
  }
  if (!s.values.allFinite()) throw Error(ErrorKind::non_finite, "voxel matrix has non-finite entries");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::invalid_argument, "lambda_fmri must be finite and >= 0");
  }
  Prepared p;
  p.y = options.standardize ? column_stats::standardize_columns(s.values).values : s.values;
  p.correlations = d.atoms.transpose() * p.y;
  return p;
}

EncodingResult finish(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda,
                      const EncodeOptions& options, const Prepared& p, Eigen::MatrixXd coefficients) {
  EncodingResult result;
  result.subject_id = s.subject_id;
  result.lambda_fmri = lambda;
  // Constant voxels standardize to zeros; R^2 is judged on the raw column so they stay undefined.
  result.per_voxel_r2 = column_stats::column_r2(p.y, d.atoms * coefficients);
  for (Eigen::Index v = 0; v < s.values.cols(); ++v) {
    if (column_stats::has_zero_variance(s.values.col(v))) {
      result.per_voxel_r2[static_cast<std::size_t>(v)] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  const std::size_t stride = std::max<std::size_t>(1, options.kkt_stride);
  for (Eigen::Index v = 0; v < s.values.cols(); v += static_cast<Eigen::Index>(stride)) {
    const auto cert = lasso::kkt_check(p.y.col(v), d.atoms, lambda, coefficients.col(v));
    ++result.kkt_checked;
    if (!cert.ok) ++result.kkt_failures;
    result.kkt_max_violation = std::max(result.kkt_max_violation, cert.max_violation);
  }
  result.coefficients = std::move(coefficients);
  return result;
}

}  // namespace

EncodingResult encode_voxels(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda,
                             const EncodeOptions& options) {
  const Prepared p = prepare(s, d, lambda, options);
  const lasso::GramSolver solver(d.atoms, options.solver);
  Eigen::MatrixXd coefficients(d.k(), s.values.cols());
  const Eigen::Index n = s.values.cols();
#pragma omp parallel for schedule(dynamic, 32)
  for (Eigen::Index v = 0; v < n; ++v) {
    coefficients.col(v) = solver.solve(p.correlations.col(v), lambda);
  }
  return finish(s, d, lambda, options, p, std::move(coefficients));
}

EncodingResult encode_voxels_serial(const VoxelMatrix& s, const sdl::Dictionary& d, double lambda,
                                    const EncodeOptions& options) {
  const Prepared p = prepare(s, d, lambda, options);
  const lasso::GramSolver solver(d.atoms, options.solver);
  Eigen::MatrixXd coefficients(d.k(), s.values.cols());
  for (Eigen::Index v = 0; v < s.values.cols(); ++v) {
    coefficients.col(v) = solver.solve(p.correlations.col(v), lambda);
  }
  return finish(s, d, lambda, options, p, std::move(coefficients));
}

WelchResult compare_r2_distributions(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "each group needs at least 2 subjects");
  }
  auto moments = [](std::span<const double> g) {
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(g.size());
    double ss = 0.0;
    for (double v : g) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / static_cast<double>(g.size() - 1)};
  };
  const auto [mean_a, var_a] = moments(a);
  const auto [mean_b, var_b] = moments(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double se2 = var_a / na + var_b / nb;
  const double diff = mean_a - mean_b;

  WelchResult r;
  if (!(se2 > 0.0)) {
    // Both groups constant: identical means give no evidence, distinct means are certain.
    r.degrees_of_freedom = na + nb - 2.0;
    if (diff == 0.0) return r;
    r.t_statistic = diff > 0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.t_statistic = diff / std::sqrt(se2);
  const double qa = var_a / na;
  const double qb = var_b / nb;
  r.degrees_of_freedom = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(r.degrees_of_freedom);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_statistic)));
  r.p_value = std::min(1.0, r.p_value);
  return r;
}

}  // namespace neurocode::encoder
