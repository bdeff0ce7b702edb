#pragma once

// Plain CSV artifacts: AN index sidecar, parcellation, BN masks, R^2 columns.

#include <filesystem>
#include <string>
#include <vector>

#include "neurocode/an_construct.hpp"
#include "neurocode/stat_map.hpp"

namespace neurocode::table_io {

/// Header `column,layer,head,dim`.
void write_an_index(const std::filesystem::path& path, const an::ANIndex& index);
an::ANIndex read_an_index(const std::filesystem::path& path);

/// Header `voxel,region` plus an optional `# regions: name1;name2;...` first line.
void write_parcellation(const std::filesystem::path& path, const stat_map::Parcellation& parcellation);
/// Region names default to network_1..network_R (R = max(17, max label + 1)) when the file has none.
stat_map::Parcellation read_parcellation(const std::filesystem::path& path);

/// Header `voxel,sign`; only non-zero voxels are listed. The voxel count is kept
/// in a `# voxels: N` first line so the mask can be rebuilt.
void write_bn_map(const std::filesystem::path& path, const stat_map::BNMap& map);
stat_map::BNMap read_bn_map(const std::filesystem::path& path, std::size_t atom_id);

/// Header `voxel,r2`; undefined entries are written as `nan`.
void write_r2(const std::filesystem::path& path, const std::vector<double>& r2, const std::string& label = "voxel");

/// Shortest round-trip decimal form, so repeated runs emit identical bytes.
std::string format_double(double v);

}  // namespace neurocode::table_io
