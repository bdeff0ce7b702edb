#include "neurocode/lasso.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>

#include "neurocode/error.hpp"

namespace neurocode::lasso {

namespace {

// Objective without the constant ||y||^2 term.
double reduced_objective(const Eigen::MatrixXd& g, const Eigen::VectorXd& c, double lambda,
                         const Eigen::VectorXd& a) {
  return a.dot(g * a) - 2.0 * c.dot(a) + lambda * a.lpNorm<1>();
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Largest subgradient violation, from c = D^T y and ga = G a.
double kkt_violation(const Eigen::VectorXd& c, const Eigen::VectorXd& ga, double lambda, const Eigen::VectorXd& a) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double grad = 2.0 * (c(j) - ga(j));
    const double v = a(j) != 0.0 ? std::abs(grad - lambda * sign_of(a(j))) : std::max(0.0, std::abs(grad) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace

double soft_threshold(double x, double threshold) noexcept {
  if (x > threshold) return x - threshold;
  if (x < -threshold) return x + threshold;
  return 0.0;
}

double objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                 const Eigen::VectorXd& a) {
  return (y - d * a).squaredNorm() + lambda * a.lpNorm<1>();
}

GramSolver::GramSolver(const Eigen::MatrixXd& dictionary, SolverOptions options)
    : gram_(dictionary.transpose() * dictionary), options_(options) {
  if (!dictionary.allFinite()) throw Error(ErrorKind::non_finite, "dictionary has non-finite entries");
}

Eigen::VectorXd GramSolver::solve(const Eigen::VectorXd& c, double lambda,
                                  const Eigen::VectorXd* warm_start) const {
  const Eigen::Index k = gram_.rows();
  if (c.size() != k) throw Error(ErrorKind::shape_mismatch, "correlation vector length != atom count");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorKind::invalid_argument, "lambda must be finite and >= 0");
  }
  if (!c.allFinite()) throw Error(ErrorKind::non_finite, "non-finite signal");

  Eigen::VectorXd a = Eigen::VectorXd::Zero(k);
  if (warm_start != nullptr) {
    if (warm_start->size() != k) throw Error(ErrorKind::shape_mismatch, "warm start length != atom count");
    a = *warm_start;
  }
  Eigen::VectorXd ga = gram_ * a;
  const double half_lambda = 0.5 * lambda;

  for (int sweep = 0; sweep < options_.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double gjj = gram_(j, j);
      const double old = a(j);
      double updated = 0.0;
      if (gjj > 0.0) {
        const double rho = c(j) - ga(j) + gjj * old;
        updated = soft_threshold(rho, half_lambda) / gjj;
      }
      const double delta = updated - old;
      if (delta != 0.0) {
        a(j) = updated;
        ga.noalias() += delta * gram_.col(j);
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < options_.tolerance && kkt_violation(c, ga, lambda, a) <= 1e-9 * std::max(1.0, lambda)) break;
  }
  if (options_.polish) polish(c, lambda, a);
  return a;
}

bool GramSolver::polish(const Eigen::VectorXd& c, double lambda, Eigen::VectorXd& a) const {
  Eigen::VectorXd start = a;
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a(j) != 0.0) support.push_back(j);
  }
  // A rank-deficient support leaves a flat direction that coordinate descent
  // crawls along. Moving along a null vector of G_SS keeps the fit, so step the
  // way that lowers the l1 term until a coordinate reaches zero and drop it.
  while (!support.empty()) {
    const auto n = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = 0; q < n; ++q) g(p, q) = gram_(support[p], support[q]);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    if (eig.eigenvalues()(0) > 1e-10 * std::max(1.0, eig.eigenvalues()(n - 1))) break;
    Eigen::VectorXd v = eig.eigenvectors().col(0);
    double slope = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) slope += sign_of(start(support[p])) * v(p);
    if (slope > 0.0) v = -v;
    double step = std::numeric_limits<double>::infinity();
    Eigen::Index hit = -1;
    for (Eigen::Index p = 0; p < n; ++p) {
      const double x = start(support[p]);
      if (x * v(p) < 0.0 && -x / v(p) < step) {
        step = -x / v(p);
        hit = p;
      }
    }
    if (hit < 0) return false;
    for (Eigen::Index p = 0; p < n; ++p) start(support[p]) += step * v(p);
    start(support[hit]) = 0.0;
    support.erase(support.begin() + hit);
  }
  if (support.empty()) return false;
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd gss(s, s);
  Eigen::VectorXd rhs(s);
  for (Eigen::Index p = 0; p < s; ++p) {
    rhs(p) = c(support[p]) - 0.5 * lambda * sign_of(start(support[p]));
    for (Eigen::Index q = 0; q < s; ++q) gss(p, q) = gram_(support[p], support[q]);
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gss);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd z = ldlt.solve(rhs);
  if (!z.allFinite() || (gss * z - rhs).norm() > 1e-10 * std::max(1.0, rhs.norm())) return false;

  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(a.size());
  for (Eigen::Index p = 0; p < s; ++p) {
    if (lambda > 0.0 && sign_of(z(p)) != sign_of(start(support[p]))) return false;
    candidate(support[p]) = z(p);
  }
  // Off-support coordinates must stay optimal at zero.
  const Eigen::VectorXd grad = 2.0 * (c - gram_ * candidate);
  const double tol = 1e-9 * std::max(1.0, lambda);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (candidate(j) == 0.0 && std::abs(grad(j)) > lambda + tol) return false;
  }
  const double before = reduced_objective(gram_, c, lambda, a);
  const double after = reduced_objective(gram_, c, lambda, candidate);
  // The candidate already satisfies KKT; this only guards against a numerically worse solve.
  if (after > before + 1e-12 * std::max(1.0, std::abs(before))) return false;
  a = candidate;
  return true;
}

Eigen::VectorXd lasso_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                          const SolverOptions& options) {
  if (y.size() != d.rows()) throw Error(ErrorKind::shape_mismatch, "signal length != dictionary rows");
  if (!y.allFinite()) throw Error(ErrorKind::non_finite, "non-finite signal");
  const GramSolver solver(d, options);
  return solver.solve(d.transpose() * y, lambda);
}

KktCertificate kkt_check(const Eigen::VectorXd& y, const Eigen::MatrixXd& d, double lambda,
                         const Eigen::VectorXd& a) {
  const Eigen::VectorXd grad = 2.0 * d.transpose() * (y - d * a);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double v = a(j) != 0.0 ? std::abs(grad(j) - lambda * sign_of(a(j)))
                                 : std::max(0.0, std::abs(grad(j)) - lambda);
    worst = std::max(worst, v);
  }
  const double tol = 1e-6 * std::max(1.0, lambda);
  return {worst <= tol, worst};
}

}  // namespace neurocode::lasso
