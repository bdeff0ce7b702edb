#include "neurocode/sdl.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "neurocode/column_stats.hpp"
#include "neurocode/error.hpp"

namespace neurocode::sdl {

namespace {

constexpr double kNormSlack = 1e-6;

void check_coding_inputs(const Eigen::MatrixXd& x, const Dictionary& d, const CodeMatrix* warm) {
  if (x.rows() != d.atoms.rows()) {
    throw Error(ErrorKind::shape_mismatch, "signal rows != dictionary rows");
  }
  if (warm != nullptr && (warm->values.rows() != d.k() || warm->values.cols() != x.cols())) {
    throw Error(ErrorKind::shape_mismatch, "warm-start codes have the wrong shape");
  }
  for (Eigen::Index j = 0; j < d.k(); ++j) {
    if (d.atoms.col(j).norm() > 1.0 + kNormSlack) {
      throw Error(ErrorKind::invalid_argument, "dictionary atom norm exceeds 1");
    }
  }
}

void code_column(const lasso::GramSolver& solver, const Eigen::MatrixXd& x, const Dictionary& d,
                 double lambda, const CodeMatrix* warm, Eigen::Index j, Eigen::MatrixXd& out) {
  const Eigen::VectorXd c = d.atoms.transpose() * x.col(j);
  if (warm != nullptr) {
    const Eigen::VectorXd w = warm->values.col(j);
    out.col(j) = solver.solve(c, lambda, &w);
  } else {
    out.col(j) = solver.solve(c, lambda);
  }
}

// One pass of block-coordinate descent on the atoms given accumulated statistics
// a_stat = sum a a^T (k x k) and b_stat = sum x a^T (t x k).
void update_atoms(Eigen::MatrixXd& atoms, const Eigen::MatrixXd& a_stat, const Eigen::MatrixXd& b_stat) {
  for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
    const double ajj = a_stat(j, j);
    if (!(ajj > 1e-12)) continue;
    Eigen::VectorXd u = atoms.col(j) + (b_stat.col(j) - atoms * a_stat.col(j)) / ajj;
    const double norm = u.norm();
    if (norm > 1.0) u /= norm;
    atoms.col(j) = u;
  }
}

// Sampling helpers use raw engine output so results do not depend on the
// standard library's distribution implementations.
std::size_t bounded(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

}  // namespace

Dictionary Dictionary::from_matrix(Eigen::MatrixXd atoms) {
  for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
    const double norm = atoms.col(j).norm();
    if (norm > 1.0) atoms.col(j) /= norm;
  }
  return Dictionary{std::move(atoms)};
}

double CodeMatrix::sparsity() const {
  if (values.size() == 0) return 0.0;
  return static_cast<double>((values.array() == 0.0).count()) / static_cast<double>(values.size());
}

Dictionary init_dictionary(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
  if (k > static_cast<std::size_t>(x.cols())) {
    throw Error(ErrorKind::invalid_argument, "k exceeds the number of AN columns");
  }
  std::vector<std::size_t> candidates;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (x.col(j).norm() > 0.0) candidates.push_back(static_cast<std::size_t>(j));
  }
  if (candidates.size() < k) {
    throw Error(ErrorKind::degenerate, "fewer non-zero columns than requested atoms");
  }
  std::mt19937_64 rng(seed);
  shuffle(candidates, rng);
  Eigen::MatrixXd atoms(x.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t a = 0; a < k; ++a) {
    const auto col = x.col(static_cast<Eigen::Index>(candidates[a]));
    atoms.col(static_cast<Eigen::Index>(a)) = col / col.norm();
  }
  return Dictionary{std::move(atoms)};
}

CodeMatrix sparse_code(const Eigen::MatrixXd& x, const Dictionary& d, double lambda,
                       const CodeMatrix* warm, const lasso::SolverOptions& solver_options) {
  check_coding_inputs(x, d, warm);
  const lasso::GramSolver solver(d.atoms, solver_options);
  Eigen::MatrixXd out(d.k(), x.cols());
  const Eigen::Index n = x.cols();
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index j = 0; j < n; ++j) code_column(solver, x, d, lambda, warm, j, out);
  return CodeMatrix{std::move(out)};
}

CodeMatrix sparse_code_serial(const Eigen::MatrixXd& x, const Dictionary& d, double lambda,
                              const CodeMatrix* warm, const lasso::SolverOptions& solver_options) {
  check_coding_inputs(x, d, warm);
  const lasso::GramSolver solver(d.atoms, solver_options);
  Eigen::MatrixXd out(d.k(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) code_column(solver, x, d, lambda, warm, j, out);
  return CodeMatrix{std::move(out)};
}

double objective(const Eigen::MatrixXd& x, const Dictionary& d, const CodeMatrix& a, double lambda) {
  return (x - d.atoms * a.values).squaredNorm() + lambda * a.values.cwiseAbs().sum();
}

std::vector<double> reconstruction_r2(const Eigen::MatrixXd& x, const Dictionary& d, const CodeMatrix& a) {
  if (d.atoms.rows() != x.rows() || a.values.rows() != d.k() || a.values.cols() != x.cols()) {
    throw Error(ErrorKind::shape_mismatch, "inconsistent shapes for reconstruction R^2");
  }
  return column_stats::column_r2(x, d.atoms * a.values);
}

LearnResult learn_dictionary(const Eigen::MatrixXd& x, const LearnOptions& opt) {
  if (opt.k == 0) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
  if (opt.epochs == 0) throw Error(ErrorKind::invalid_argument, "epochs must be >= 1");
  if (opt.batch_size == 0) throw Error(ErrorKind::invalid_argument, "batch size must be >= 1");
  if (!(opt.lambda >= 0.0)) throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
  if (!x.allFinite()) throw Error(ErrorKind::non_finite, "activation matrix has non-finite entries");
  if (x.size() == 0 || (x.array() == 0.0).all()) {
    throw Error(ErrorKind::degenerate, "activation matrix is all zeros");
  }
  if (opt.k > static_cast<std::size_t>(x.cols())) {
    throw Error(ErrorKind::invalid_argument, "k exceeds the number of AN columns");
  }

  const Eigen::Index t = x.rows();
  const Eigen::Index n = x.cols();
  const auto k = static_cast<Eigen::Index>(opt.k);
  const double lambda = opt.lambda;

  Dictionary dict = init_dictionary(x, opt.k, opt.seed);
  CodeMatrix codes = sparse_code(x, dict, lambda, nullptr, opt.solver);
  double current = objective(x, dict, codes, lambda);

  FitReport report;
  report.seed = opt.seed;
  report.initial_objective = current;

  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  Eigen::MatrixXd a_stat = Eigen::MatrixXd::Zero(k, k);
  Eigen::MatrixXd b_stat = Eigen::MatrixXd::Zero(t, k);
  const auto eta = static_cast<double>(opt.batch_size);
  std::size_t batches_seen = 0;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);

    Dictionary candidate = dict;
    a_stat.setZero();
    b_stat.setZero();
    batches_seen = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const auto m = static_cast<Eigen::Index>(stop - start);
      Eigen::MatrixXd xb(t, m);
      CodeMatrix warm{Eigen::MatrixXd(k, m)};
      for (Eigen::Index c = 0; c < m; ++c) {
        const auto col = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(c)]);
        xb.col(c) = x.col(col);
        warm.values.col(c) = codes.values.col(col);
      }
      const CodeMatrix ab = sparse_code(xb, candidate, lambda, &warm, opt.solver);

      // Down-weights statistics gathered with older dictionaries.
      ++batches_seen;
      const auto tb = static_cast<double>(batches_seen);
      const double theta = tb < eta ? tb * eta : eta * eta + tb - eta;
      const double beta = (theta + 1.0 - eta) / (theta + 1.0);
      a_stat = beta * a_stat + ab.values * ab.values.transpose();
      b_stat = beta * b_stat + xb * ab.values.transpose();
      update_atoms(candidate.atoms, a_stat, b_stat);
    }

    CodeMatrix candidate_codes = sparse_code(x, candidate, lambda, &codes, opt.solver);
    double candidate_obj = objective(x, candidate, candidate_codes, lambda);

    if (candidate_obj > current) {
      // The online pass made things worse on the full data; take a full-batch
      // block-coordinate step from the previous iterate instead.
      report.fallback_epochs.push_back(epoch);
      candidate = dict;
      const Eigen::MatrixXd full_a = codes.values * codes.values.transpose();
      const Eigen::MatrixXd full_b = x * codes.values.transpose();
      for (int pass = 0; pass < 5; ++pass) update_atoms(candidate.atoms, full_a, full_b);
      candidate_codes = sparse_code(x, candidate, lambda, &codes, opt.solver);
      candidate_obj = objective(x, candidate, candidate_codes, lambda);
      a_stat = full_a;
      b_stat = full_b;
    }
    dict = std::move(candidate);
    codes = std::move(candidate_codes);
    current = candidate_obj;

    // Atoms unused for the whole epoch restart from the worst-reconstructed columns.
    std::vector<Eigen::Index> dead;
    for (Eigen::Index a = 0; a < k; ++a) {
      if ((codes.values.row(a).array() == 0.0).all()) dead.push_back(a);
    }
    if (!dead.empty()) {
      const Eigen::VectorXd residual = (x - dict.atoms * codes.values).colwise().squaredNorm().transpose();
      std::vector<Eigen::Index> worst(static_cast<std::size_t>(n));
      std::iota(worst.begin(), worst.end(), Eigen::Index{0});
      std::stable_sort(worst.begin(), worst.end(),
                       [&](Eigen::Index l, Eigen::Index r) { return residual(l) > residual(r); });
      std::size_t used = 0;
      for (Eigen::Index a : dead) {
        while (used < worst.size() && !(residual(worst[used]) > 0.0 && x.col(worst[used]).norm() > 0.0)) ++used;
        if (used >= worst.size()) break;
        dict.atoms.col(a) = x.col(worst[used]) / x.col(worst[used]).norm();
        a_stat.row(a).setZero();
        a_stat.col(a).setZero();
        b_stat.col(a).setZero();
        ++used;
        ++report.reinitialized_atoms;
      }
      codes = sparse_code(x, dict, lambda, &codes, opt.solver);
      current = objective(x, dict, codes, lambda);
    }
    report.objective_trace.push_back(current);
  }

  report.per_column_r2 = reconstruction_r2(x, dict, codes);
  return LearnResult{std::move(dict), std::move(codes), std::move(report)};
}

LearnResult learn_from_activations(const Eigen::MatrixXd& raw, const LearnOptions& options) {
  const auto standardized = column_stats::standardize_columns(raw);
  const std::size_t kept = standardized.kept_count();
  if (kept == 0) throw Error(ErrorKind::degenerate, "every AN column has zero variance");
  if (kept < static_cast<std::size_t>(raw.cols())) {
    std::cerr << "warning: dropping " << (static_cast<std::size_t>(raw.cols()) - kept)
              << " zero-variance AN columns before dictionary learning\n";
  }
  Eigen::MatrixXd x(raw.rows(), static_cast<Eigen::Index>(kept));
  std::vector<Eigen::Index> source;
  source.reserve(kept);
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    if (standardized.kept[static_cast<std::size_t>(j)]) {
      x.col(static_cast<Eigen::Index>(source.size())) = standardized.values.col(j);
      source.push_back(j);
    }
  }
  LearnResult fit = learn_dictionary(x, options);
  if (kept == static_cast<std::size_t>(raw.cols())) return fit;

  Eigen::MatrixXd full_codes = Eigen::MatrixXd::Zero(fit.dictionary.k(), raw.cols());
  std::vector<double> full_r2(static_cast<std::size_t>(raw.cols()), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < source.size(); ++c) {
    full_codes.col(source[c]) = fit.codes.values.col(static_cast<Eigen::Index>(c));
    full_r2[static_cast<std::size_t>(source[c])] = fit.report.per_column_r2[c];
  }
  fit.codes.values = std::move(full_codes);
  fit.report.per_column_r2 = std::move(full_r2);
  return fit;
}

}  // namespace neurocode::sdl
