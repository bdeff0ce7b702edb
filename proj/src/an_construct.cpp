#include "neurocode/an_construct.hpp"

#include <cmath>
#include <exception>
#include <string>

#include "neurocode/error.hpp"

namespace neurocode::an {

namespace {

// Neumaier-compensated sum; keeps near-cancelling means accurate.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_columns(std::span<const double> q, std::span<const double> k) {
  if (q.empty() || k.empty()) {
    throw Error(ErrorKind::invalid_argument, "AN activation needs non-empty query/key columns");
  }
  if (q.size() != k.size()) {
    throw Error(ErrorKind::shape_mismatch, "query and key columns differ in length");
  }
}

double mean_of_column(std::span<const float> data, std::size_t seq_len, std::size_t head_dim,
                      std::size_t base, std::size_t dim) {
  CompensatedSum sum;
  for (std::size_t tok = 0; tok < seq_len; ++tok) sum.add(data[base + tok * head_dim + dim]);
  return sum.value() / static_cast<double>(seq_len);
}

void check_layer_shapes(std::span<const float> q, std::span<const float> k, std::size_t num_heads,
                        std::size_t seq_len, std::size_t head_dim) {
  const std::size_t expected = num_heads * seq_len * head_dim;
  if (q.size() != expected || k.size() != expected) {
    throw Error(ErrorKind::shape_mismatch, "Q/K payload size does not match (heads, seq_len, dim)");
  }
  if (seq_len == 0) throw Error(ErrorKind::invalid_argument, "empty sequence");
}

struct LoadedLayer {
  tensor_io::Tensor q;
  tensor_io::Tensor k;
};

LoadedLayer load_layer(const tensor_io::QKManifest& m, std::size_t s, std::size_t l) {
  const auto& entry = m.entry(s, l);
  LoadedLayer layer{tensor_io::read_tensor(entry.q_path), tensor_io::read_tensor(entry.k_path)};
  const tensor_io::Shape declared = {m.num_heads, m.seq_len[s], m.head_dim};
  if (layer.q.shape != declared || layer.k.shape != declared) {
    throw Error(ErrorKind::shape_mismatch, "Q/K tensors for timestep " + std::to_string(s) +
                                               " layer " + std::to_string(l) +
                                               " do not share the declared shape");
  }
  for (const auto* t : {&layer.q, &layer.k}) {
    for (float v : t->values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::non_finite, "non-finite value in dump for timestep " +
                                               std::to_string(s) + " layer " + std::to_string(l));
      }
    }
  }
  return layer;
}

// Computes X[s, layer block] for one (timestep, layer) task.
void fill_task(const tensor_io::QKManifest& m, const BuildOptions& options, std::size_t s,
               std::size_t l, Eigen::MatrixXd& x) {
  const LoadedLayer layer = load_layer(m, s, l);
  const std::size_t n = m.seq_len[s];
  const auto acts = layer_activations(layer.q.values, layer.k.values, m.num_heads, n, m.head_dim);
  if (options.verify_with_brute) {
    const auto ref = layer_activations_brute(layer.q.values, layer.k.values, m.num_heads, n, m.head_dim);
    for (std::size_t j = 0; j < acts.size(); ++j) {
      if (std::abs(acts[j] - ref[j]) > options.verify_tolerance * std::max(1.0, std::abs(ref[j]))) {
        throw Error(ErrorKind::degenerate, "fast AN activation disagrees with brute-force oracle at "
                                           "timestep " + std::to_string(s) + " layer " +
                                               std::to_string(l));
      }
    }
  }
  const std::size_t block = m.num_heads * m.head_dim;
  for (std::size_t j = 0; j < block; ++j) {
    x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(l * block + j)) = acts[j];
  }
}

}  // namespace

ANIndex build_an_index(std::size_t num_layers, std::size_t num_heads, std::size_t head_dim) {
  if (num_layers == 0 || num_heads == 0 || head_dim == 0) {
    throw Error(ErrorKind::invalid_argument, "AN index counts must all be >= 1");
  }
  ANIndex index{num_layers, num_heads, head_dim, {}};
  index.entries.reserve(num_layers * num_heads * head_dim);
  for (std::uint32_t l = 0; l < num_layers; ++l) {
    for (std::uint32_t h = 0; h < num_heads; ++h) {
      for (std::uint32_t i = 0; i < head_dim; ++i) index.entries.push_back({l, h, i});
    }
  }
  return index;
}

double an_activation_brute(std::span<const double> q, std::span<const double> k) {
  check_columns(q, k);
  const std::size_t n = q.size();
  std::vector<double> outer(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < n; ++c) outer[j * n + c] = q[j] * k[c];
  }
  CompensatedSum sum;
  for (double v : outer) sum.add(v);
  return sum.value() / static_cast<double>(n * n);
}

double an_activation_fast(std::span<const double> q, std::span<const double> k) {
  check_columns(q, k);
  CompensatedSum sq;
  CompensatedSum sk;
  for (std::size_t j = 0; j < q.size(); ++j) {
    sq.add(q[j]);
    sk.add(k[j]);
  }
  const auto n = static_cast<double>(q.size());
  return (sq.value() / n) * (sk.value() / n);
}

std::vector<double> layer_activations(std::span<const float> q, std::span<const float> k,
                                      std::size_t num_heads, std::size_t seq_len,
                                      std::size_t head_dim) {
  check_layer_shapes(q, k, num_heads, seq_len, head_dim);
  std::vector<double> out(num_heads * head_dim);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t base = h * seq_len * head_dim;
    for (std::size_t i = 0; i < head_dim; ++i) {
      out[h * head_dim + i] = mean_of_column(q, seq_len, head_dim, base, i) *
                              mean_of_column(k, seq_len, head_dim, base, i);
    }
  }
  return out;
}

std::vector<double> layer_activations_brute(std::span<const float> q, std::span<const float> k,
                                            std::size_t num_heads, std::size_t seq_len,
                                            std::size_t head_dim) {
  check_layer_shapes(q, k, num_heads, seq_len, head_dim);
  std::vector<double> out(num_heads * head_dim);
  std::vector<double> qc(seq_len);
  std::vector<double> kc(seq_len);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const std::size_t base = h * seq_len * head_dim;
    for (std::size_t i = 0; i < head_dim; ++i) {
      for (std::size_t tok = 0; tok < seq_len; ++tok) {
        qc[tok] = q[base + tok * head_dim + i];
        kc[tok] = k[base + tok * head_dim + i];
      }
      out[h * head_dim + i] = an_activation_brute(qc, kc);
    }
  }
  return out;
}

std::pair<ActivationMatrix, ANIndex> build_activation_matrix(const tensor_io::QKManifest& m,
                                                             const BuildOptions& options) {
  ANIndex index = build_an_index(m.num_layers, m.num_heads, m.head_dim);
  ActivationMatrix x{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.num_timesteps),
                                           static_cast<Eigen::Index>(index.size()))};
  const auto tasks = static_cast<long long>(m.num_timesteps * m.num_layers);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (long long task = 0; task < tasks; ++task) {
    try {
      const auto s = static_cast<std::size_t>(task) / m.num_layers;
      const auto l = static_cast<std::size_t>(task) % m.num_layers;
      fill_task(m, options, s, l, x.values);
    } catch (...) {
#pragma omp critical(an_build_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return {std::move(x), std::move(index)};
}

std::pair<ActivationMatrix, ANIndex> build_activation_matrix_serial(const tensor_io::QKManifest& m,
                                                                    const BuildOptions& options) {
  ANIndex index = build_an_index(m.num_layers, m.num_heads, m.head_dim);
  ActivationMatrix x{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.num_timesteps),
                                           static_cast<Eigen::Index>(index.size()))};
  for (std::size_t s = 0; s < m.num_timesteps; ++s) {
    for (std::size_t l = 0; l < m.num_layers; ++l) fill_task(m, options, s, l, x.values);
  }
  return {std::move(x), std::move(index)};
}

}  // namespace neurocode::an
