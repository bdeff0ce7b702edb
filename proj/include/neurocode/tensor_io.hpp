#pragma once

// ANTX tensor container and the QK-dump manifest.
//
// Byte layout (all integers and floats little-endian):
//   magic      4 bytes  "ANTX"
//   version    u32      1
//   ndim       u32      >= 1
//   dims       u64 x ndim, each >= 1
//   dtype_code u32      1 = IEEE-754 float32
//   payload    float32 x product(dims), row-major

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace neurocode::tensor_io {

inline constexpr char kMagic[4] = {'A', 'N', 'T', 'X'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

using Shape = std::vector<std::uint64_t>;

struct Tensor {
  Shape shape;
  std::vector<float> values;
};

std::uint64_t element_count(const Shape& shape);

void write_tensor(const std::filesystem::path& path, const Shape& dims,
                  std::span<const float> values);
Tensor read_tensor(const std::filesystem::path& path);

/// Parses only the header; used for manifest validation without loading payloads.
Shape read_tensor_shape(const std::filesystem::path& path);

// Encoding helpers, exposed for golden-byte tests.
std::vector<std::uint8_t> encode_tensor(const Shape& dims, std::span<const float> values);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

// Matrices travel as 2-D row-major float32 tensors and are upcast to double on load.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

enum class Branch { vision, text };

struct QKEntry {
  std::size_t timestep = 0;
  std::size_t layer = 0;
  std::filesystem::path q_path;
  std::filesystem::path k_path;
};

struct QKManifest {
  std::string model_name;
  Branch branch = Branch::vision;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  std::size_t num_timesteps = 0;
  std::vector<std::size_t> seq_len;  // one per timestep
  bool special_tokens_excluded = false;
  // Sorted by (timestep, layer); exactly num_timesteps * num_layers entries.
  std::vector<QKEntry> entries;

  const QKEntry& entry(std::size_t timestep, std::size_t layer) const {
    return entries[timestep * num_layers + layer];
  }
};

struct ModelConfig {
  const char* id;
  std::size_t num_layers;
  std::size_t num_heads;
  std::size_t head_dim;
};

/// Known attention geometries; manifests naming one of these ids must match it.
std::span<const ModelConfig> known_models();

/// Parses and fully validates a manifest; paths are resolved against its directory.
QKManifest load_manifest(const std::filesystem::path& path);

/// Writes a manifest JSON whose entry paths are stored relative to `path`'s directory.
void save_manifest(const std::filesystem::path& path, const QKManifest& manifest);

}  // namespace neurocode::tensor_io
