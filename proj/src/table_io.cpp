#include "neurocode/table_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "neurocode/error.hpp"

namespace neurocode::table_io {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fs::exists(path) ? ErrorKind::io : ErrorKind::missing_file, "cannot read " + path.string());
  return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) fields.push_back(field);
  return fields;
}

long long parse_int(const std::string& s, const fs::path& path) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::invalid_argument, path.string() + ": bad integer '" + s + "'");
  return v;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_an_index(const fs::path& path, const an::ANIndex& index) {
  auto out = open_out(path);
  out << "column,layer,head,dim\n";
  for (std::size_t j = 0; j < index.size(); ++j) {
    const auto& e = index.entries[j];
    out << j << ',' << e.layer << ',' << e.head << ',' << e.dim << '\n';
  }
}

an::ANIndex read_an_index(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  an::ANIndex index;
  std::size_t max_layer = 0, max_head = 0, max_dim = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 4) throw Error(ErrorKind::invalid_argument, path.string() + ": expected 4 fields");
    if (static_cast<std::size_t>(parse_int(f[0], path)) != index.entries.size()) {
      throw Error(ErrorKind::invalid_argument, path.string() + ": columns must be listed in order");
    }
    const an::NeuronId id{static_cast<std::uint32_t>(parse_int(f[1], path)),
                          static_cast<std::uint32_t>(parse_int(f[2], path)),
                          static_cast<std::uint32_t>(parse_int(f[3], path))};
    max_layer = std::max<std::size_t>(max_layer, id.layer);
    max_head = std::max<std::size_t>(max_head, id.head);
    max_dim = std::max<std::size_t>(max_dim, id.dim);
    index.entries.push_back(id);
  }
  index.num_layers = max_layer + 1;
  index.num_heads = max_head + 1;
  index.head_dim = max_dim + 1;
  return index;
}

void write_parcellation(const fs::path& path, const stat_map::Parcellation& parcellation) {
  auto out = open_out(path);
  out << "# regions: ";
  for (std::size_t r = 0; r < parcellation.region_names.size(); ++r) {
    out << (r ? ";" : "") << parcellation.region_names[r];
  }
  out << "\nvoxel,region\n";
  for (std::size_t v = 0; v < parcellation.labels.size(); ++v) out << v << ',' << parcellation.labels[v] << '\n';
}

stat_map::Parcellation read_parcellation(const fs::path& path) {
  auto in = open_in(path);
  stat_map::Parcellation parcellation;
  std::vector<std::pair<std::size_t, std::size_t>> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# regions:", 0) == 0) {
      std::string names = line.substr(10);
      names.erase(0, names.find_first_not_of(' '));
      parcellation.region_names = split(names, ';');
      continue;
    }
    if (line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.find("voxel") != std::string::npos) continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 2) throw Error(ErrorKind::invalid_argument, path.string() + ": expected voxel,region");
    const auto voxel = parse_int(f[0], path);
    const auto region = parse_int(f[1], path);
    if (voxel < 0 || region < 0) throw Error(ErrorKind::invalid_argument, path.string() + ": negative id");
    rows.emplace_back(static_cast<std::size_t>(voxel), static_cast<std::size_t>(region));
  }
  std::sort(rows.begin(), rows.end());
  std::size_t max_region = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].first != i) {
      throw Error(ErrorKind::invalid_argument, path.string() + ": every voxel 0..N-1 needs exactly one label");
    }
    parcellation.labels.push_back(rows[i].second);
    max_region = std::max(max_region, rows[i].second);
  }
  if (parcellation.region_names.empty()) {
    parcellation.region_names = stat_map::default_region_names(std::max<std::size_t>(17, max_region + 1));
  }
  parcellation.validate(parcellation.labels.size());
  return parcellation;
}

void write_bn_map(const fs::path& path, const stat_map::BNMap& map) {
  auto out = open_out(path);
  out << "# voxels: " << map.signs.size() << "\nvoxel,sign\n";
  for (std::size_t v = 0; v < map.signs.size(); ++v) {
    if (map.signs[v] != 0) out << v << ',' << static_cast<int>(map.signs[v]) << '\n';
  }
}

stat_map::BNMap read_bn_map(const fs::path& path, std::size_t atom_id) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  strip_cr(line);
  if (line.rfind("# voxels:", 0) != 0) throw Error(ErrorKind::invalid_argument, path.string() + ": missing voxel count");
  std::string count = line.substr(9);
  count.erase(0, count.find_first_not_of(' '));
  stat_map::BNMap map{atom_id, std::vector<std::int8_t>(static_cast<std::size_t>(parse_int(count, path)), 0)};
  std::getline(in, line);
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2) throw Error(ErrorKind::invalid_argument, path.string() + ": expected voxel,sign");
    const auto v = parse_int(f[0], path);
    const auto s = parse_int(f[1], path);
    if (v < 0 || static_cast<std::size_t>(v) >= map.signs.size() || (s != 1 && s != -1)) {
      throw Error(ErrorKind::invalid_argument, path.string() + ": bad mask row");
    }
    map.signs[static_cast<std::size_t>(v)] = static_cast<std::int8_t>(s);
  }
  return map;
}

void write_r2(const fs::path& path, const std::vector<double>& r2, const std::string& label) {
  auto out = open_out(path);
  out << label << ",r2\n";
  for (std::size_t i = 0; i < r2.size(); ++i) out << i << ',' << format_double(r2[i]) << '\n';
}

}  // namespace neurocode::table_io
