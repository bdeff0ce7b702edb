#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neurocode/an_construct.hpp"
#include "neurocode/sdl.hpp"
#include "neurocode/stat_map.hpp"

namespace neurocode::analysis {

struct CorrelationMatrix {
  Eigen::MatrixXd values;                 // k x k Pearson; NaN rows/cols for flagged atoms
  std::vector<std::size_t> zero_variance;  // flagged atom ids
};

CorrelationMatrix atom_correlation_matrix(const sdl::Dictionary& d);

enum class ProfileMode {
  magnitude,  // sum of |loading| per layer, normalized to 1
  signed_,    // sum of signed loadings per layer, divided by total |loading|
};

struct LayerProfile {
  std::size_t atom_id = 0;
  std::vector<double> weights;  // one per transformer layer
  bool empty = false;           // atom has no non-zero loadings
};

std::vector<LayerProfile> layer_profiles(const sdl::CodeMatrix& codes, const an::ANIndex& index,
                                         ProfileMode mode = ProfileMode::magnitude);

struct RegionGroup {
  std::size_t region = 0;
  std::vector<std::size_t> atoms;  // atoms whose maps significantly activate the region

  bool redundant() const noexcept { return atoms.size() >= 2; }
};

/// Only regions with at least one activating atom are listed.
std::vector<RegionGroup> spatial_overlap(std::span<const stat_map::BNMap> maps,
                                         const stat_map::Parcellation& parcellation,
                                         double dice_threshold = 0.7,
                                         stat_map::DiceMode mode = stat_map::DiceMode::whole);

enum class MapRelation { antagonistic, aligned };
enum class LayerRelation { mirrored_layers, shared_layers, unrelated };

const char* to_string(MapRelation r) noexcept;
const char* to_string(LayerRelation r) noexcept;

struct PolarityPair {
  std::size_t atom_a = 0;
  std::size_t atom_b = 0;  // atom_a < atom_b
  double map_correlation = 0.0;
  double profile_correlation = 0.0;
  MapRelation map_relation = MapRelation::antagonistic;
  LayerRelation layer_relation = LayerRelation::unrelated;
};

struct PolarityOptions {
  double spatial_corr_threshold = -0.5;  // antagonistic at or below; aligned at or above its negation
  double mirrored_threshold = -0.5;
  double shared_threshold = 0.5;
};

/// Pairs with strongly (anti)correlated signed maps, classified by how their
/// layer profiles relate. Pairs in between are left out.
std::vector<PolarityPair> polarity_pairs(std::span<const stat_map::BNMap> maps,
                                         std::span<const LayerProfile> profiles,
                                         const PolarityOptions& options = {});

}  // namespace neurocode::analysis
