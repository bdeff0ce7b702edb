#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace neurocode::stat_map {

/// Per (atom, voxel) group statistics. `defined(a, v)` is false where the
/// coefficients had zero variance across subjects (t = NaN, p = q = 1).
struct StatMap {
  Eigen::MatrixXd t_stats;   // k x N
  Eigen::MatrixXd p_values;  // k x N
  Eigen::MatrixXd q_values;  // k x N, BH per atom across defined voxels
  std::size_t n_subjects = 0;

  bool defined(Eigen::Index atom, Eigen::Index voxel) const { return !std::isnan(t_stats(atom, voxel)); }
};

/// Signed significance mask for one atom: +1 / -1 where q <= level, else 0.
struct BNMap {
  std::size_t atom_id = 0;
  std::vector<std::int8_t> signs;

  std::size_t support_size() const;
};

struct Parcellation {
  std::vector<std::size_t> labels;  // one region id per voxel, in [0, R)
  std::vector<std::string> region_names;

  std::size_t regions() const noexcept { return region_names.size(); }
  std::vector<std::size_t> region_voxels(std::size_t region) const;
  void validate(std::size_t voxel_count) const;
};

/// 17 placeholder region names mirroring the 17-network scheme; real names come from the atlas file.
std::vector<std::string> default_region_names(std::size_t count = 17);

struct OneSampleResult {
  double t = 0.0;  // NaN when undefined
  double p = 1.0;
};

/// Two-sided one-sample t-test against zero.
OneSampleResult one_sample_ttest(std::span<const double> values);

/// coefficient_stack[s] is subject s's k x N coefficient matrix.
StatMap group_ttest(std::span<const Eigen::MatrixXd> coefficient_stack);
StatMap group_ttest_serial(std::span<const Eigen::MatrixXd> coefficient_stack);

struct FdrResult {
  std::vector<bool> mask;
  std::vector<double> q_values;
};

/// Benjamini-Hochberg step-up at `q_level`, with monotone q-values.
FdrResult fdr_bh(std::span<const double> p_values, double q_level);

std::vector<BNMap> threshold_map(const StatMap& stat, double q_level = 0.05);

/// 2|A n B| / (|A| + |B|) on boolean voxel masks of equal length.
double dice(const std::vector<bool>& a, const std::vector<bool>& b);

enum class DiceMode {
  whole,   // unsigned BN support vs the region mask
  region,  // support restricted to the region vs the region mask
};

std::vector<bool> support_mask(const BNMap& map);
std::vector<bool> region_mask(const Parcellation& parcellation, std::size_t region);

double region_dice(const BNMap& map, const Parcellation& parcellation, std::size_t region,
                   DiceMode mode = DiceMode::whole);

/// counts[r] = number of maps whose Dice with region r exceeds the threshold.
std::vector<std::size_t> count_parcel_activations(std::span<const BNMap> maps,
                                                  const Parcellation& parcellation,
                                                  double dice_threshold = 0.7,
                                                  DiceMode mode = DiceMode::whole);

}  // namespace neurocode::stat_map
