#include "neurocode/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "neurocode/column_stats.hpp"
#include "neurocode/error.hpp"

namespace neurocode::synth {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  }
  return m;
}

// signal + noise rescaled so the empirical SNR is exactly snr_db.
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& signal, double snr_db, std::mt19937_64& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return signal;
  Eigen::MatrixXd noise = gaussian(signal.rows(), signal.cols(), rng);
  const double signal_power = signal.squaredNorm() / static_cast<double>(signal.size());
  const double noise_power = noise.squaredNorm() / static_cast<double>(noise.size());
  if (signal_power > 0.0) {
    const double target = signal_power / std::pow(10.0, snr_db / 10.0);
    noise *= std::sqrt(target / noise_power);
  }
  return signal + noise;
}

std::size_t weighted_pick(const std::vector<double>& weights, const std::vector<bool>& taken,
                          std::mt19937_64& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += taken[i] ? 0.0 : weights[i];
  std::uniform_real_distribution<double> uniform(0.0, total);
  double u = uniform(rng);
  std::size_t last = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (taken[i] || weights[i] <= 0.0) continue;
    last = i;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return last;
}

}  // namespace

void SynthSpec::validate_and_complete() {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "synth spec: " + what); };
  if (t == 0 || n_an == 0 || k_true == 0) fail("t, n_an and k_true must be >= 1");
  if (k_true > n_an) fail("k_true must not exceed n_an");
  if (sparsity > k_true) fail("sparsity must not exceed k_true");
  if (std::isnan(snr_db) || std::isnan(fmri_snr_db) || snr_db == -kNoiseless || fmri_snr_db == -kNoiseless) {
    fail("snr must be a number or +inf");
  }
  if (num_layers == 0 && num_heads == 0 && head_dim == 0) {
    num_layers = 1;
    num_heads = 1;
    head_dim = n_an;
  }
  if (num_layers * num_heads * head_dim != n_an) fail("num_layers * num_heads * head_dim must equal n_an");
  if (!atom_layer_affinity.empty()) {
    if (atom_layer_affinity.size() != k_true) fail("atom_layer_affinity needs one row per atom");
    for (const auto& row : atom_layer_affinity) {
      if (row.size() != num_layers) fail("atom_layer_affinity rows need one weight per layer");
      for (double w : row) {
        if (!(w >= 0.0)) fail("atom_layer_affinity weights must be >= 0");
      }
    }
  }
  if (n_regions == 0) fail("n_regions must be >= 1");
  if (n_voxels < n_regions) fail("need at least one voxel per region");
  if (atom_region.empty()) {
    for (std::size_t a = 0; a < k_true; ++a) atom_region.push_back(a % n_regions);
  }
  if (atom_region.size() != k_true) fail("atom_region needs one region per atom");
  for (auto r : atom_region) {
    if (r >= n_regions) fail("atom_region entry out of range");
  }
  if (atom_sign.empty()) atom_sign.assign(k_true, 1);
  if (atom_sign.size() != k_true) fail("atom_sign needs one sign per atom");
  for (int s : atom_sign) {
    if (s != 1 && s != -1) fail("atom_sign entries must be +1 or -1");
  }
  if (!(gain_min > 0.0) || !(gain_max >= gain_min)) fail("gains must satisfy 0 < gain_min <= gain_max");
}

std::pair<Eigen::MatrixXd, SynthTruth> generate_synthetic_an(SynthSpec spec) {
  spec.validate_and_complete();
  std::mt19937_64 rng(derive_seed(spec.seed, 0));
  const auto t = static_cast<Eigen::Index>(spec.t);
  const auto k = static_cast<Eigen::Index>(spec.k_true);
  const auto n = static_cast<Eigen::Index>(spec.n_an);

  SynthTruth truth;
  truth.index = an::build_an_index(spec.num_layers, spec.num_heads, spec.head_dim);
  truth.atom_region = spec.atom_region;
  truth.atom_sign = spec.atom_sign;

  truth.d_true = gaussian(t, k, rng);
  for (Eigen::Index a = 0; a < k; ++a) {
    auto col = truth.d_true.col(a);
    col.array() -= col.mean();
    col /= col.norm();
  }

  truth.a_true = Eigen::MatrixXd::Zero(k, n);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t layer = truth.index.entries[static_cast<std::size_t>(j)].layer;
    std::vector<double> weights(spec.k_true, 1.0);
    if (!spec.atom_layer_affinity.empty()) {
      for (std::size_t a = 0; a < spec.k_true; ++a) weights[a] = spec.atom_layer_affinity[a][layer];
    }
    std::vector<bool> taken(spec.k_true, false);
    for (std::size_t s = 0; s < spec.sparsity; ++s) {
      const std::size_t a = weighted_pick(weights, taken, rng);
      if (a >= spec.k_true) break;  // no eligible atoms left for this layer
      taken[a] = true;
      const double m = magnitude(rng);
      truth.a_true(static_cast<Eigen::Index>(a), j) = coin(rng) ? m : -m;
    }
  }

  std::mt19937_64 noise_rng(derive_seed(spec.seed, 1));
  const Eigen::MatrixXd signal = truth.d_true * truth.a_true;
  Eigen::MatrixXd x = add_noise(signal, spec.snr_db, noise_rng);

  std::mt19937_64 gain_rng(derive_seed(spec.seed, 2));
  std::uniform_real_distribution<double> gain(spec.gain_min, spec.gain_max);
  truth.gains.assign(spec.n_subjects, std::vector<double>(spec.k_true));
  for (auto& row : truth.gains) {
    for (double& g : row) g = gain(gain_rng);
  }
  return {std::move(x), std::move(truth)};
}

SynthFmri generate_synthetic_fmri(const SynthTruth& truth, SynthSpec spec) {
  spec.validate_and_complete();
  const auto t = truth.d_true.rows();
  const auto k = static_cast<std::size_t>(truth.d_true.cols());
  if (truth.gains.size() != spec.n_subjects || truth.atom_region.size() != k) {
    throw Error(ErrorKind::invalid_argument, "synthetic truth does not match the SynthSpec");
  }
  SynthFmri out;
  out.parcellation.region_names = stat_map::default_region_names(spec.n_regions);
  out.parcellation.labels.resize(spec.n_voxels);
  for (std::size_t v = 0; v < spec.n_voxels; ++v) out.parcellation.labels[v] = v * spec.n_regions / spec.n_voxels;

  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    // Per-region time course for this subject.
    Eigen::MatrixXd region_signal = Eigen::MatrixXd::Zero(t, static_cast<Eigen::Index>(spec.n_regions));
    for (std::size_t a = 0; a < k; ++a) {
      region_signal.col(static_cast<Eigen::Index>(truth.atom_region[a])) +=
          truth.atom_sign[a] * truth.gains[s][a] * truth.d_true.col(static_cast<Eigen::Index>(a));
    }
    Eigen::MatrixXd signal(t, static_cast<Eigen::Index>(spec.n_voxels));
    for (std::size_t v = 0; v < spec.n_voxels; ++v) {
      signal.col(static_cast<Eigen::Index>(v)) = region_signal.col(static_cast<Eigen::Index>(out.parcellation.labels[v]));
    }
    std::mt19937_64 rng(derive_seed(spec.seed, 100 + s));
    out.subjects.push_back({add_noise(signal, spec.fmri_snr_db, rng), "sub-" + std::to_string(s + 1)});
  }
  return out;
}

double DictionaryMatch::mean_abs_correlation() const {
  if (abs_correlation.empty()) return 0.0;
  return std::accumulate(abs_correlation.begin(), abs_correlation.end(), 0.0) /
         static_cast<double>(abs_correlation.size());
}

double DictionaryMatch::min_abs_correlation() const {
  if (abs_correlation.empty()) return 0.0;
  return *std::min_element(abs_correlation.begin(), abs_correlation.end());
}

DictionaryMatch match_dictionaries(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& truth) {
  if (learned.rows() != truth.rows()) throw Error(ErrorKind::shape_mismatch, "dictionaries differ in row count");
  if (learned.cols() < truth.cols()) {
    throw Error(ErrorKind::invalid_argument, "learned dictionary has fewer atoms than the truth");
  }
  const Eigen::Index kt = truth.cols();
  const Eigen::Index kl = learned.cols();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(kt, kl, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < kt; ++i) {
    for (Eigen::Index j = 0; j < kl; ++j) corr(i, j) = column_stats::pearson(truth.col(i), learned.col(j));
  }
  DictionaryMatch match;
  match.learned_index.assign(static_cast<std::size_t>(kt), -1);
  match.signs.assign(static_cast<std::size_t>(kt), 1);
  match.abs_correlation.assign(static_cast<std::size_t>(kt), 0.0);
  std::vector<bool> used_true(static_cast<std::size_t>(kt)), used_learned(static_cast<std::size_t>(kl));
  for (Eigen::Index round = 0; round < kt; ++round) {
    double best = -1.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < kt; ++i) {
      if (used_true[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < kl; ++j) {
        if (used_learned[static_cast<std::size_t>(j)] || std::isnan(corr(i, j))) continue;
        if (std::abs(corr(i, j)) > best) {
          best = std::abs(corr(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0) break;
    used_true[static_cast<std::size_t>(bi)] = true;
    used_learned[static_cast<std::size_t>(bj)] = true;
    match.learned_index[static_cast<std::size_t>(bi)] = bj;
    match.signs[static_cast<std::size_t>(bi)] = corr(bi, bj) < 0 ? -1 : 1;
    match.abs_correlation[static_cast<std::size_t>(bi)] = best;
  }
  return match;
}

double empirical_snr_db(const Eigen::MatrixXd& signal, const Eigen::MatrixXd& noisy) {
  const double ps = signal.squaredNorm();
  const double pn = (noisy - signal).squaredNorm();
  if (pn == 0.0) return kNoiseless;
  return 10.0 * std::log10(ps / pn);
}

nlohmann::json to_json(const SynthSpec& spec) {
  auto snr = [](double v) -> nlohmann::json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  return {
      {"t", spec.t},
      {"n_an", spec.n_an},
      {"k_true", spec.k_true},
      {"sparsity", spec.sparsity},
      {"snr_db", snr(spec.snr_db)},
      {"num_layers", spec.num_layers},
      {"num_heads", spec.num_heads},
      {"head_dim", spec.head_dim},
      {"atom_layer_affinity", spec.atom_layer_affinity},
      {"n_subjects", spec.n_subjects},
      {"n_voxels", spec.n_voxels},
      {"n_regions", spec.n_regions},
      {"atom_region", spec.atom_region},
      {"atom_sign", spec.atom_sign},
      {"fmri_snr_db", snr(spec.fmri_snr_db)},
      {"gain_min", spec.gain_min},
      {"gain_max", spec.gain_max},
      {"seed", spec.seed},
  };
}

SynthSpec spec_from_json(const nlohmann::json& doc) {
  auto snr = [](const nlohmann::json& v) {
    if (v.is_null()) return kNoiseless;
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf" || s == "infinity" || s == "Infinity") return kNoiseless;
      throw Error(ErrorKind::invalid_argument, "synth spec: snr must be a number or \"inf\"");
    }
    return v.get<double>();
  };
  SynthSpec spec;
  try {
    spec.t = doc.value("t", spec.t);
    spec.n_an = doc.value("n_an", spec.n_an);
    spec.k_true = doc.value("k_true", spec.k_true);
    spec.sparsity = doc.value("sparsity", spec.sparsity);
    if (doc.contains("snr_db")) spec.snr_db = snr(doc["snr_db"]);
    spec.num_layers = doc.value("num_layers", spec.num_layers);
    spec.num_heads = doc.value("num_heads", spec.num_heads);
    spec.head_dim = doc.value("head_dim", spec.head_dim);
    spec.atom_layer_affinity = doc.value("atom_layer_affinity", spec.atom_layer_affinity);
    spec.n_subjects = doc.value("n_subjects", spec.n_subjects);
    spec.n_voxels = doc.value("n_voxels", spec.n_voxels);
    spec.n_regions = doc.value("n_regions", spec.n_regions);
    spec.atom_region = doc.value("atom_region", spec.atom_region);
    spec.atom_sign = doc.value("atom_sign", spec.atom_sign);
    if (doc.contains("fmri_snr_db")) spec.fmri_snr_db = snr(doc["fmri_snr_db"]);
    spec.gain_min = doc.value("gain_min", spec.gain_min);
    spec.gain_max = doc.value("gain_max", spec.gain_max);
    spec.seed = doc.value("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("synth spec: ") + e.what());
  }
  spec.validate_and_complete();
  return spec;
}

}  // namespace neurocode::synth
