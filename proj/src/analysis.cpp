#include "neurocode/analysis.hpp"

#include <cmath>
#include <limits>

#include "neurocode/column_stats.hpp"
#include "neurocode/error.hpp"

namespace neurocode::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd as_vector(const stat_map::BNMap& map) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(map.signs.size()));
  for (std::size_t i = 0; i < map.signs.size(); ++i) v(static_cast<Eigen::Index>(i)) = map.signs[i];
  return v;
}

Eigen::VectorXd as_vector(const std::vector<double>& w) {
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

}  // namespace

const char* to_string(MapRelation r) noexcept {
  return r == MapRelation::antagonistic ? "antagonistic" : "aligned";
}

const char* to_string(LayerRelation r) noexcept {
  switch (r) {
    case LayerRelation::mirrored_layers: return "mirrored-layers";
    case LayerRelation::shared_layers: return "shared-layers";
    case LayerRelation::unrelated: return "unrelated";
  }
  return "unrelated";
}

CorrelationMatrix atom_correlation_matrix(const sdl::Dictionary& d) {
  const Eigen::Index k = d.k();
  CorrelationMatrix out{Eigen::MatrixXd::Constant(k, k, kNaN), {}};
  std::vector<bool> flagged(static_cast<std::size_t>(k));
  for (Eigen::Index a = 0; a < k; ++a) {
    flagged[static_cast<std::size_t>(a)] = column_stats::has_zero_variance(d.atoms.col(a));
    if (flagged[static_cast<std::size_t>(a)]) out.zero_variance.push_back(static_cast<std::size_t>(a));
  }
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index a = 0; a < k; ++a) {
    if (flagged[static_cast<std::size_t>(a)]) continue;
    out.values(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < k; ++b) {
      if (flagged[static_cast<std::size_t>(b)]) continue;
      const double r = column_stats::pearson(d.atoms.col(a), d.atoms.col(b));
      out.values(a, b) = r;
      out.values(b, a) = r;
    }
  }
  return out;
}

std::vector<LayerProfile> layer_profiles(const sdl::CodeMatrix& codes, const an::ANIndex& index,
                                         ProfileMode mode) {
  if (static_cast<std::size_t>(codes.values.cols()) != index.size()) {
    throw Error(ErrorKind::shape_mismatch, "code matrix columns do not match the AN index");
  }
  std::vector<LayerProfile> out(static_cast<std::size_t>(codes.values.rows()));
  for (Eigen::Index a = 0; a < codes.values.rows(); ++a) {
    LayerProfile& profile = out[static_cast<std::size_t>(a)];
    profile.atom_id = static_cast<std::size_t>(a);
    profile.weights.assign(index.num_layers, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < index.size(); ++j) {
      const double w = codes.values(a, static_cast<Eigen::Index>(j));
      profile.weights[index.entries[j].layer] += mode == ProfileMode::magnitude ? std::abs(w) : w;
      total += std::abs(w);
    }
    if (!(total > 0.0)) {
      profile.empty = true;
      continue;
    }
    for (double& w : profile.weights) w /= total;
  }
  return out;
}

std::vector<RegionGroup> spatial_overlap(std::span<const stat_map::BNMap> maps,
                                         const stat_map::Parcellation& parcellation, double dice_threshold,
                                         stat_map::DiceMode mode) {
  std::vector<RegionGroup> groups;
  for (std::size_t r = 0; r < parcellation.regions(); ++r) {
    RegionGroup group{r, {}};
    for (const auto& map : maps) {
      if (map.support_size() == 0) continue;
      if (stat_map::region_dice(map, parcellation, r, mode) > dice_threshold) group.atoms.push_back(map.atom_id);
    }
    if (!group.atoms.empty()) groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<PolarityPair> polarity_pairs(std::span<const stat_map::BNMap> maps,
                                         std::span<const LayerProfile> profiles,
                                         const PolarityOptions& options) {
  std::vector<const LayerProfile*> profile_of(maps.size(), nullptr);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    for (const auto& p : profiles) {
      if (p.atom_id == maps[i].atom_id) profile_of[i] = &p;
    }
  }
  std::vector<Eigen::VectorXd> vectors;
  vectors.reserve(maps.size());
  for (const auto& m : maps) vectors.push_back(as_vector(m));

  std::vector<PolarityPair> pairs;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].support_size() == 0 || profile_of[i] == nullptr || profile_of[i]->empty) continue;
    for (std::size_t j = i + 1; j < maps.size(); ++j) {
      if (maps[j].support_size() == 0 || profile_of[j] == nullptr || profile_of[j]->empty) continue;
      const double rm = column_stats::pearson(vectors[i], vectors[j]);
      if (std::isnan(rm)) continue;
      MapRelation relation;
      if (rm <= options.spatial_corr_threshold) {
        relation = MapRelation::antagonistic;
      } else if (rm >= -options.spatial_corr_threshold) {
        relation = MapRelation::aligned;
      } else {
        continue;
      }
      const double rp = column_stats::pearson(as_vector(profile_of[i]->weights), as_vector(profile_of[j]->weights));
      LayerRelation layers = LayerRelation::unrelated;
      if (rp <= options.mirrored_threshold) {
        layers = LayerRelation::mirrored_layers;
      } else if (rp >= options.shared_threshold) {
        layers = LayerRelation::shared_layers;
      }
      PolarityPair pair{std::min(maps[i].atom_id, maps[j].atom_id), std::max(maps[i].atom_id, maps[j].atom_id),
                        rm, std::isnan(rp) ? 0.0 : rp, relation, layers};
      pairs.push_back(pair);
    }
  }
  return pairs;
}

}  // namespace neurocode::analysis
