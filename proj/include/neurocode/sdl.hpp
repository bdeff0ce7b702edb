#pragma once

// Sparse dictionary learning on AN activations:
//   min_{D, A} ||X - D A||_F^2 + lambda * ||A||_1,  ||d_j||_2 <= 1.
// Online mini-batch learning with running sufficient statistics and
// block-coordinate atom updates; every epoch is checked against the
// full-batch objective so the reported trace never increases.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "neurocode/lasso.hpp"

namespace neurocode::sdl {

/// t x k, columns are temporal atoms with L2 norm <= 1.
struct Dictionary {
  Eigen::MatrixXd atoms;

  Eigen::Index k() const noexcept { return atoms.cols(); }
  Eigen::Index timesteps() const noexcept { return atoms.rows(); }

  /// Wraps a matrix, shrinking any column whose norm exceeds 1 (e.g. after a
  /// float32 round trip) back onto the unit sphere.
  static Dictionary from_matrix(Eigen::MatrixXd atoms);
};

/// k x n codes; zeros are exact solver zeros.
struct CodeMatrix {
  Eigen::MatrixXd values;

  double sparsity() const;  // fraction of exact zeros
};

struct FitReport {
  double initial_objective = 0.0;
  std::vector<double> objective_trace;  // one value per epoch, after that epoch
  std::vector<double> per_column_r2;    // NaN = undefined (zero-variance column)
  std::uint64_t seed = 0;
  std::vector<std::size_t> fallback_epochs;  // epochs that used the full-batch update
  std::size_t reinitialized_atoms = 0;
};

struct LearnOptions {
  std::size_t k = 128;
  double lambda = 0.15;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  lasso::SolverOptions solver{};
};

struct LearnResult {
  Dictionary dictionary;
  CodeMatrix codes;
  FitReport report;
};

Dictionary init_dictionary(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed);

/// Column-parallel LASSO coding of every column of x against a fixed dictionary.
CodeMatrix sparse_code(const Eigen::MatrixXd& x, const Dictionary& d, double lambda,
                       const CodeMatrix* warm_start = nullptr,
                       const lasso::SolverOptions& solver = {});
CodeMatrix sparse_code_serial(const Eigen::MatrixXd& x, const Dictionary& d, double lambda,
                              const CodeMatrix* warm_start = nullptr,
                              const lasso::SolverOptions& solver = {});

double objective(const Eigen::MatrixXd& x, const Dictionary& d, const CodeMatrix& a, double lambda);

/// Expects standardized columns (see learn_from_activations).
LearnResult learn_dictionary(const Eigen::MatrixXd& x, const LearnOptions& options);

/// Standardizes columns, drops zero-variance ones, learns on the rest, and
/// scatters codes back so the code matrix has one column per input column.
/// Dropped columns get zero codes and an undefined R^2.
LearnResult learn_from_activations(const Eigen::MatrixXd& raw, const LearnOptions& options);

std::vector<double> reconstruction_r2(const Eigen::MatrixXd& x, const Dictionary& d, const CodeMatrix& a);

}  // namespace neurocode::sdl
