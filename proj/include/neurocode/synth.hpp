#pragma once

// Planted-truth data for every stage: AN activations X = D_true A_true + noise
// and per-subject voxel data whose regions carry their assigned atoms.

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "neurocode/an_construct.hpp"
#include "neurocode/encoder.hpp"
#include "neurocode/stat_map.hpp"

namespace neurocode::synth {

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

struct SynthSpec {
  std::size_t t = 200;
  std::size_t n_an = 500;
  std::size_t k_true = 8;
  std::size_t sparsity = 3;     // non-zeros per AN code column
  double snr_db = kNoiseless;   // AN matrix SNR
  // AN geometry; n_an must equal the product. Defaults to (1, 1, n_an).
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  // Optional k_true x num_layers weights steering which layers each atom loads on.
  std::vector<std::vector<double>> atom_layer_affinity;

  std::size_t n_subjects = 6;
  std::size_t n_voxels = 2000;
  std::size_t n_regions = 8;
  std::vector<std::size_t> atom_region;  // default: atom a -> region a % n_regions
  std::vector<int> atom_sign;            // +1 / -1, default all +1
  double fmri_snr_db = kNoiseless;
  double gain_min = 0.8;
  double gain_max = 1.2;

  std::uint64_t seed = 0;

  /// Fills defaults and checks invariants; throws Error on an invalid spec.
  void validate_and_complete();
};

struct SynthTruth {
  Eigen::MatrixXd d_true;  // t x k_true, zero-mean unit-norm columns
  Eigen::MatrixXd a_true;  // k_true x n_an
  an::ANIndex index;
  std::vector<std::size_t> atom_region;
  std::vector<int> atom_sign;
  std::vector<std::vector<double>> gains;  // [subject][atom]
};

struct SynthFmri {
  std::vector<encoder::VoxelMatrix> subjects;
  stat_map::Parcellation parcellation;
};

/// Returns X and the truth; gains are filled too so the fMRI step is a pure function of (truth, spec).
std::pair<Eigen::MatrixXd, SynthTruth> generate_synthetic_an(SynthSpec spec);

SynthFmri generate_synthetic_fmri(const SynthTruth& truth, SynthSpec spec);

struct DictionaryMatch {
  std::vector<long long> learned_index;  // per true atom; -1 if unmatched
  std::vector<int> signs;                // per true atom
  std::vector<double> abs_correlation;   // per true atom

  double mean_abs_correlation() const;
  double min_abs_correlation() const;
};

/// Greedy maximum-|Pearson| matching of true atoms to learned atoms without replacement.
DictionaryMatch match_dictionaries(const Eigen::MatrixXd& d_learned, const Eigen::MatrixXd& d_true);

/// Empirical SNR in dB, 10 log10(mean(signal^2) / mean(noise^2)).
double empirical_snr_db(const Eigen::MatrixXd& signal, const Eigen::MatrixXd& noisy);

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec spec_from_json(const nlohmann::json& doc);

}  // namespace neurocode::synth
