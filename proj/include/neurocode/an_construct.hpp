#pragma once

// Artificial neurons (ANs): one per (layer, head, head-dimension) triple of an
// attention module. The activation of neuron (l, h, i) at one timestep is the
// mean of the n x n matrix q_{:,i} k_{:,i}^T built from that head's query and
// key columns, with no softmax and no 1/sqrt(d) scaling.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "neurocode/tensor_io.hpp"

namespace neurocode::an {

struct NeuronId {
  std::uint32_t layer = 0;
  std::uint32_t head = 0;
  std::uint32_t dim = 0;

  friend auto operator<=>(const NeuronId&, const NeuronId&) = default;
};

/// Column order of the activation matrix: lexicographic in (layer, head, dim).
struct ANIndex {
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  std::vector<NeuronId> entries;

  std::size_t size() const noexcept { return entries.size(); }
  std::size_t column_of(const NeuronId& id) const noexcept {
    return (id.layer * num_heads + id.head) * head_dim + id.dim;
  }
};

/// t x n_AN, rows are timesteps and columns follow ANIndex order.
struct ActivationMatrix {
  Eigen::MatrixXd values;

  Eigen::Index timesteps() const noexcept { return values.rows(); }
  Eigen::Index neurons() const noexcept { return values.cols(); }
};

ANIndex build_an_index(std::size_t num_layers, std::size_t num_heads, std::size_t head_dim);

/// Reference oracle: materializes the full outer product and averages it.
double an_activation_brute(std::span<const double> q_col, std::span<const double> k_col);

/// Production path: mean(q) * mean(k), which equals the mean of the outer product.
double an_activation_fast(std::span<const double> q_col, std::span<const double> k_col);

/// Activations of every (head, dim) neuron of one layer at one timestep.
/// `q` and `k` are row-major (num_heads, seq_len, head_dim) float32 payloads.
/// Output is laid out head-major: out[h * head_dim + i].
std::vector<double> layer_activations(std::span<const float> q, std::span<const float> k,
                                      std::size_t num_heads, std::size_t seq_len,
                                      std::size_t head_dim);

/// Same as layer_activations but through the brute-force oracle.
std::vector<double> layer_activations_brute(std::span<const float> q, std::span<const float> k,
                                            std::size_t num_heads, std::size_t seq_len,
                                            std::size_t head_dim);

struct BuildOptions {
  /// Recompute every neuron with the brute-force oracle and fail on disagreement.
  bool verify_with_brute = false;
  double verify_tolerance = 1e-10;
};

/// OpenMP over (timestep, layer) pairs; each task writes a disjoint block of X.
std::pair<ActivationMatrix, ANIndex> build_activation_matrix(const tensor_io::QKManifest& manifest,
                                                             const BuildOptions& options = {});

/// Serial reference kept for equivalence tests and benchmarks.
std::pair<ActivationMatrix, ANIndex> build_activation_matrix_serial(
    const tensor_io::QKManifest& manifest, const BuildOptions& options = {});

}  // namespace neurocode::an
