#include "neurocode/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>

#include "json.hpp"

#include "neurocode/error.hpp"

namespace neurocode::tensor_io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kFixedHeaderBytes = 4 + 4 + 4;  // magic, version, ndim

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    value |= static_cast<T>(bytes[offset + b]) << (8 * b);
  }
  return value;
}

struct Header {
  Shape shape;
  std::size_t payload_offset = 0;
};

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::bad_magic, "not an ANTX file (bad magic)");
  }
  if (bytes.size() < kFixedHeaderBytes) {
    throw Error(ErrorKind::truncated, "truncated ANTX header");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kVersion) {
    throw Error(ErrorKind::unsupported_format,
                "unsupported ANTX version " + std::to_string(version));
  }
  const auto ndim = get_le<std::uint32_t>(bytes, 8);
  if (ndim == 0) {
    throw Error(ErrorKind::unsupported_format, "ANTX ndim must be >= 1");
  }
  std::size_t offset = kFixedHeaderBytes;
  if (bytes.size() < offset + 8ull * ndim + 4) {
    throw Error(ErrorKind::truncated, "truncated ANTX header");
  }
  Header header;
  header.shape.reserve(ndim);
  for (std::uint32_t d = 0; d < ndim; ++d) {
    const auto dim = get_le<std::uint64_t>(bytes, offset);
    if (dim == 0) {
      throw Error(ErrorKind::unsupported_format, "ANTX dims must be >= 1");
    }
    header.shape.push_back(dim);
    offset += 8;
  }
  const auto dtype = get_le<std::uint32_t>(bytes, offset);
  if (dtype != kDtypeFloat32) {
    throw Error(ErrorKind::unsupported_format,
                "unsupported ANTX dtype_code " + std::to_string(dtype));
  }
  header.payload_offset = offset + 4;
  return header;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path, std::size_t limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(fs::exists(path) ? ErrorKind::io : ErrorKind::missing_file,
                "cannot open " + path.string());
  }
  if (limit == 0) {
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  std::vector<std::uint8_t> bytes(limit);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(limit));
  bytes.resize(static_cast<std::size_t>(in.gcount()));
  return bytes;
}

}  // namespace

std::uint64_t element_count(const Shape& shape) {
  std::uint64_t count = 1;
  for (auto d : shape) count *= d;
  return count;
}

std::vector<std::uint8_t> encode_tensor(const Shape& dims, std::span<const float> values) {
  if (dims.empty()) {
    throw Error(ErrorKind::invalid_argument, "tensor needs at least one dimension");
  }
  for (auto d : dims) {
    if (d == 0) throw Error(ErrorKind::invalid_argument, "tensor dims must be >= 1");
  }
  if (element_count(dims) != values.size()) {
    throw Error(ErrorKind::shape_mismatch,
                "dims imply " + std::to_string(element_count(dims)) + " values, got " +
                    std::to_string(values.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeaderBytes + 8 * dims.size() + 4 + 4 * values.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(out, d);
  put_le<std::uint32_t>(out, kDtypeFloat32);
  for (float v : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Header header = decode_header(bytes);
  const std::uint64_t count = element_count(header.shape);
  const std::size_t expected = header.payload_offset + 4 * count;
  if (bytes.size() < expected) {
    throw Error(ErrorKind::truncated, "truncated ANTX payload: expected " +
                                          std::to_string(expected) + " bytes, got " +
                                          std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::unsupported_format, "trailing bytes after ANTX payload");
  }
  Tensor t;
  t.shape = std::move(header.shape);
  t.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, header.payload_offset + 4 * i));
  }
  return t;
}

void write_tensor(const fs::path& path, const Shape& dims, std::span<const float> values) {
  const auto bytes = encode_tensor(dims, values);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

Tensor read_tensor(const fs::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

Shape read_tensor_shape(const fs::path& path) {
  // Enough for ndim up to 64; larger headers are read in full.
  auto bytes = read_bytes(path, kFixedHeaderBytes + 8 * 64 + 4);
  try {
    if (bytes.size() >= kFixedHeaderBytes && get_le<std::uint32_t>(bytes, 8) > 64) {
      bytes = read_bytes(path);
    }
    Header header = decode_header(bytes);
    const auto total = fs::file_size(path);
    if (total != header.payload_offset + 4 * element_count(header.shape)) {
      throw Error(total < header.payload_offset + 4 * element_count(header.shape)
                      ? ErrorKind::truncated
                      : ErrorKind::unsupported_format,
                  "payload size does not match dims");
    }
    return header.shape;
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  std::vector<float> values(static_cast<std::size_t>(m.size()));
  std::size_t pos = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values[pos++] = static_cast<float>(m(r, c));
  }
  write_tensor(path, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
               values);
}

Eigen::MatrixXd read_matrix(const fs::path& path) {
  Tensor t = read_tensor(path);
  if (t.shape.size() != 2) {
    throw Error(ErrorKind::shape_mismatch, path.string() + ": expected a 2-D tensor");
  }
  const auto rows = static_cast<Eigen::Index>(t.shape[0]);
  const auto cols = static_cast<Eigen::Index>(t.shape[1]);
  Eigen::MatrixXd m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<double>(t.values[pos++]);
  }
  return m;
}

namespace {

constexpr ModelConfig kKnownModels[] = {
    {"clip-vision", 12, 12, 64}, {"clip-text", 12, 8, 64},  {"meter-vision", 6, 12, 64},
    {"meter-text", 6, 12, 64},   {"vit", 12, 12, 64},       {"roberta", 12, 12, 64},
};

std::size_t positive_count(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_integer() || doc[key].get<long long>() < 1) {
    throw Error(ErrorKind::invalid_argument,
                std::string("manifest field '") + key + "' must be an integer >= 1");
  }
  return doc[key].get<std::size_t>();
}

}  // namespace

std::span<const ModelConfig> known_models() { return kKnownModels; }

QKManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, "manifest parse error: " + std::string(e.what()));
  }
  const fs::path base = path.parent_path();

  QKManifest m;
  try {
    m.model_name = doc.at("model_name").get<std::string>();
    const auto branch = doc.at("branch").get<std::string>();
    if (branch == "vision") {
      m.branch = Branch::vision;
    } else if (branch == "text") {
      m.branch = Branch::text;
    } else {
      throw Error(ErrorKind::invalid_argument, "manifest branch must be 'vision' or 'text'");
    }
    m.special_tokens_excluded = doc.value("special_tokens_excluded", false);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, "manifest: " + std::string(e.what()));
  }
  m.num_layers = positive_count(doc, "num_layers");
  m.num_heads = positive_count(doc, "num_heads");
  m.head_dim = positive_count(doc, "head_dim");
  m.num_timesteps = positive_count(doc, "num_timesteps");

  for (const auto& cfg : kKnownModels) {
    if (m.model_name == cfg.id &&
        (m.num_layers != cfg.num_layers || m.num_heads != cfg.num_heads ||
         m.head_dim != cfg.head_dim)) {
      throw Error(ErrorKind::shape_mismatch,
                  "manifest geometry does not match the known config for " + m.model_name);
    }
  }

  if (!doc.contains("seq_len") || !doc["seq_len"].is_array() ||
      doc["seq_len"].size() != m.num_timesteps) {
    throw Error(ErrorKind::invalid_argument, "manifest seq_len must list one count per timestep");
  }
  for (const auto& n : doc["seq_len"]) {
    if (!n.is_number_integer() || n.get<long long>() < 1) {
      throw Error(ErrorKind::invalid_argument, "manifest seq_len entries must be >= 1");
    }
    m.seq_len.push_back(n.get<std::size_t>());
  }

  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw Error(ErrorKind::invalid_argument, "manifest has no entries array");
  }
  std::vector<std::optional<QKEntry>> slots(m.num_timesteps * m.num_layers);
  for (const auto& e : doc["entries"]) {
    QKEntry entry;
    try {
      const auto ts = e.at("timestep").get<long long>();
      const auto layer = e.at("layer").get<long long>();
      if (ts < 0 || static_cast<std::size_t>(ts) >= m.num_timesteps) {
        throw Error(ErrorKind::non_contiguous,
                    "timestep " + std::to_string(ts) + " outside 0.." +
                        std::to_string(m.num_timesteps - 1));
      }
      if (layer < 0 || static_cast<std::size_t>(layer) >= m.num_layers) {
        throw Error(ErrorKind::invalid_argument, "layer " + std::to_string(layer) + " out of range");
      }
      entry.timestep = static_cast<std::size_t>(ts);
      entry.layer = static_cast<std::size_t>(layer);
      entry.q_path = base / e.at("q").get<std::string>();
      entry.k_path = base / e.at("k").get<std::string>();
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::invalid_argument, "manifest entry: " + std::string(ex.what()));
    }
    auto& slot = slots[entry.timestep * m.num_layers + entry.layer];
    if (slot) {
      throw Error(ErrorKind::invalid_argument,
                  "duplicate manifest entry for timestep " + std::to_string(entry.timestep) +
                      " layer " + std::to_string(entry.layer));
    }
    slot = std::move(entry);
  }
  for (std::size_t s = 0; s < m.num_timesteps; ++s) {
    for (std::size_t l = 0; l < m.num_layers; ++l) {
      if (!slots[s * m.num_layers + l]) {
        throw Error(ErrorKind::non_contiguous, "manifest missing timestep " + std::to_string(s) +
                                                   " layer " + std::to_string(l));
      }
    }
  }

  m.entries.reserve(slots.size());
  for (auto& slot : slots) {
    const QKEntry& entry = *slot;
    const Shape declared = {m.num_heads, m.seq_len[entry.timestep], m.head_dim};
    for (const auto& p : {entry.q_path, entry.k_path}) {
      if (!fs::exists(p)) throw Error(ErrorKind::missing_file, "missing tensor " + p.string());
      const Shape actual = read_tensor_shape(p);
      if (actual != declared) {
        throw Error(ErrorKind::shape_mismatch,
                    p.string() + ": declared shape (" + std::to_string(declared[0]) + ", " +
                        std::to_string(declared[1]) + ", " + std::to_string(declared[2]) +
                        ") does not match file");
      }
    }
    m.entries.push_back(entry);
  }
  return m;
}

void save_manifest(const fs::path& path, const QKManifest& m) {
  const fs::path base = path.parent_path();
  json doc;
  doc["model_name"] = m.model_name;
  doc["branch"] = m.branch == Branch::vision ? "vision" : "text";
  doc["num_layers"] = m.num_layers;
  doc["num_heads"] = m.num_heads;
  doc["head_dim"] = m.head_dim;
  doc["num_timesteps"] = m.num_timesteps;
  doc["seq_len"] = m.seq_len;
  doc["special_tokens_excluded"] = m.special_tokens_excluded;
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"timestep", e.timestep},
                       {"layer", e.layer},
                       {"q", fs::relative(e.q_path, base.empty() ? fs::path(".") : base).generic_string()},
                       {"k", fs::relative(e.k_path, base.empty() ? fs::path(".") : base).generic_string()}});
  }
  doc["entries"] = std::move(entries);
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace neurocode::tensor_io
