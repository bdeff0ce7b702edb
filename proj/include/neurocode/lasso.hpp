#pragma once

// LASSO under the unscaled objective  ||y - D a||^2 + lambda * ||a||_1.
// With this scaling the soft threshold is lambda / 2 and the all-zero solution
// is optimal iff lambda >= 2 * max_j |D_j^T y|.

#include <Eigen/Dense>

namespace neurocode::lasso {

struct SolverOptions {
  double tolerance = 1e-8;  // max absolute coefficient change over one sweep
  int max_sweeps = 10000;
  // Re-solve the sign-fixed KKT system on the final support; kept only if it
  // preserves the signs and does not raise the objective beyond rounding.
  bool polish = true;
};

struct KktCertificate {
  bool ok = false;
  double max_violation = 0.0;
};

double soft_threshold(double x, double threshold) noexcept;

double objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                 const Eigen::VectorXd& a);

/// Coordinate descent with covariance updates. Precomputes the Gram matrix once
/// so many right-hand sides (AN columns, voxels) can share it; `solve` is const
/// and safe to call concurrently.
class GramSolver {
 public:
  explicit GramSolver(const Eigen::MatrixXd& dictionary, SolverOptions options = {});

  /// `correlations` is D^T y. `warm_start`, when given, seeds the coordinates.
  Eigen::VectorXd solve(const Eigen::VectorXd& correlations, double lambda,
                        const Eigen::VectorXd* warm_start = nullptr) const;

  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  Eigen::Index atoms() const noexcept { return gram_.rows(); }

 private:
  bool polish(const Eigen::VectorXd& c, double lambda, Eigen::VectorXd& a) const;

  Eigen::MatrixXd gram_;
  SolverOptions options_;
};

Eigen::VectorXd lasso_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                          const SolverOptions& options = {});

/// 2 D_j^T (y - D a) must equal lambda * sign(a_j) on the support and lie in
/// [-lambda, lambda] off it; tolerance 1e-6 * max(1, lambda).
KktCertificate kkt_check(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                         const Eigen::VectorXd& a);

}  // namespace neurocode::lasso
