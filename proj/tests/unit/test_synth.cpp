#include <cmath>
#include <random>

#include "doctest.h"
#include "neurocode/encoder.hpp"
#include "neurocode/error.hpp"
#include "neurocode/stat_map.hpp"
#include "neurocode/synth.hpp"
#include "../support.hpp"

namespace synth = neurocode::synth;
namespace sm = neurocode::stat_map;
using Eigen::MatrixXd;

namespace {

synth::SynthSpec small_spec() {
  synth::SynthSpec s;
  s.t = 60;
  s.n_an = 120;
  s.k_true = 6;
  s.sparsity = 2;
  s.n_subjects = 4;
  s.n_voxels = 90;
  s.n_regions = 3;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("noiseless activations equal the planted product") {
  const auto [x, truth] = synth::generate_synthetic_an(small_spec());
  CHECK((x - truth.d_true * truth.a_true).norm() == 0.0);
  for (Eigen::Index a = 0; a < truth.d_true.cols(); ++a) {
    CHECK(truth.d_true.col(a).norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(truth.d_true.col(a).mean()) < 1e-12);
  }
  for (Eigen::Index j = 0; j < truth.a_true.cols(); ++j) {
    CHECK((truth.a_true.col(j).array() != 0.0).count() == 2);
    for (Eigen::Index a = 0; a < truth.a_true.rows(); ++a) {
      const double v = std::abs(truth.a_true(a, j));
      if (v != 0.0) CHECK((v >= 0.5 && v <= 1.5));
    }
  }
}

TEST_CASE("zero sparsity gives pure noise") {
  auto spec = small_spec();
  spec.sparsity = 0;
  spec.snr_db = 10.0;
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  CHECK(truth.a_true.isZero(0.0));
  CHECK(x.norm() > 0.0);
}

TEST_CASE("requested SNR is met") {
  synth::SynthSpec spec;
  spec.t = 200;
  spec.n_an = 500;
  spec.k_true = 8;
  spec.sparsity = 3;
  spec.snr_db = 20.0;
  spec.seed = 7;
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  const MatrixXd signal = truth.d_true * truth.a_true;
  const double measured = 10.0 * std::log10(signal.squaredNorm() / (x - signal).squaredNorm());
  CHECK(std::abs(measured - 20.0) <= 0.1);
  CHECK(synth::empirical_snr_db(signal, x) == doctest::Approx(measured).epsilon(1e-9));
}

TEST_CASE("same spec and seed are bitwise identical") {
  auto spec = small_spec();
  spec.snr_db = 15.0;
  spec.fmri_snr_db = 5.0;
  const auto [x1, t1] = synth::generate_synthetic_an(spec);
  const auto [x2, t2] = synth::generate_synthetic_an(spec);
  CHECK(x1.cwiseEqual(x2).all());
  const auto f1 = synth::generate_synthetic_fmri(t1, spec);
  const auto f2 = synth::generate_synthetic_fmri(t2, spec);
  for (std::size_t s = 0; s < f1.subjects.size(); ++s) CHECK(f1.subjects[s].values.cwiseEqual(f2.subjects[s].values).all());
  spec.seed = 6;
  CHECK(!synth::generate_synthetic_an(spec).first.cwiseEqual(x1).all());
}

TEST_CASE("noiseless unit-gain voxels encode onto their planted atoms only") {
  auto spec = small_spec();
  spec.gain_min = spec.gain_max = 1.0;
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  const auto fmri = synth::generate_synthetic_fmri(truth, spec);
  REQUIRE(fmri.subjects.size() == 4);
  const auto r = neurocode::encoder::encode_voxels(fmri.subjects[0], {truth.d_true}, 1e-4);
  for (std::size_t v = 0; v < spec.n_voxels; ++v) {
    const auto region = fmri.parcellation.labels[v];
    for (std::size_t a = 0; a < spec.k_true; ++a) {
      const bool planted = truth.atom_region[a] == region;
      CHECK((r.coefficients(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(v)) != 0.0) == planted);
    }
  }
}

TEST_CASE("negative polarity gives negative t on the planted region") {
  auto spec = small_spec();
  spec.atom_sign = {1, -1, 1, 1, -1, 1};
  spec.fmri_snr_db = 10.0;
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  const auto fmri = synth::generate_synthetic_fmri(truth, spec);
  std::vector<MatrixXd> stack;
  for (const auto& s : fmri.subjects) stack.push_back(neurocode::encoder::encode_voxels(s, {truth.d_true}, 0.2).coefficients);
  const auto stat = sm::group_ttest(stack);
  for (std::size_t a : {1u, 4u}) {
    for (std::size_t v : fmri.parcellation.region_voxels(truth.atom_region[a])) {
      CHECK(stat.t_stats(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(v)) < 0.0);
    }
  }
}

TEST_CASE("a single subject cannot be tested") {
  auto spec = small_spec();
  spec.n_subjects = 1;
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  const auto fmri = synth::generate_synthetic_fmri(truth, spec);
  const std::vector<MatrixXd> stack = {
      neurocode::encoder::encode_voxels(fmri.subjects[0], {truth.d_true}, 0.2).coefficients};
  CHECK_THROWS_AS(sm::group_ttest(stack), neurocode::Error);
}

TEST_CASE("dictionary matching") {
  std::mt19937_64 rng(71);
  MatrixXd truth = testsupport::gaussian(200, 8, rng);
  truth.colwise().normalize();
  const auto self = synth::match_dictionaries(truth, truth);
  for (std::size_t a = 0; a < 8; ++a) {
    CHECK(self.learned_index[a] == static_cast<long long>(a));
    CHECK(self.abs_correlation[a] == doctest::Approx(1.0).epsilon(1e-12));
  }
  const std::vector<int> perm = {3, 0, 7, 1, 6, 2, 5, 4};
  MatrixXd shuffled(200, 10);
  shuffled.rightCols(2) = testsupport::gaussian(200, 2, rng);
  for (int a = 0; a < 8; ++a) shuffled.col(perm[static_cast<std::size_t>(a)]) = (a % 2 ? -1.0 : 1.0) * truth.col(a);
  const auto m = synth::match_dictionaries(shuffled, truth);
  for (int a = 0; a < 8; ++a) {
    CHECK(m.learned_index[static_cast<std::size_t>(a)] == perm[static_cast<std::size_t>(a)]);
    CHECK(m.signs[static_cast<std::size_t>(a)] == (a % 2 ? -1 : 1));
    CHECK(m.abs_correlation[static_cast<std::size_t>(a)] == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto baseline = synth::match_dictionaries(testsupport::gaussian(200, 8, rng), truth);
  CHECK(baseline.mean_abs_correlation() < 0.35);
  CHECK_THROWS_AS(synth::match_dictionaries(testsupport::gaussian(199, 8, rng), truth), neurocode::Error);
  CHECK_THROWS_AS(synth::match_dictionaries(testsupport::gaussian(200, 7, rng), truth), neurocode::Error);
}

TEST_CASE("layer affinity steers codes") {
  auto spec = small_spec();
  spec.num_layers = 4;
  spec.num_heads = 3;
  spec.head_dim = 10;
  spec.k_true = 2;
  spec.sparsity = 1;
  spec.n_regions = 2;
  spec.atom_layer_affinity = {{1, 1, 0, 0}, {0, 0, 1, 1}};
  const auto [x, truth] = synth::generate_synthetic_an(spec);
  for (std::size_t j = 0; j < truth.index.size(); ++j) {
    const bool deep = truth.index.entries[j].layer >= 2;
    CHECK((truth.a_true(deep ? 0 : 1, static_cast<Eigen::Index>(j)) == 0.0));
  }
}

TEST_CASE("invalid specs") {
  auto spec = small_spec();
  spec.k_true = 200;
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
  spec = small_spec();
  spec.sparsity = 7;
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
  spec = small_spec();
  spec.snr_db = std::nan("");
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
  spec = small_spec();
  spec.atom_region = {0, 1, 2};
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
  spec = small_spec();
  spec.atom_sign = {1, 1, 1, 1, 1, 0};
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
  spec = small_spec();
  spec.n_an = 100;
  spec.num_layers = 3;
  spec.num_heads = 3;
  spec.head_dim = 3;
  CHECK_THROWS_AS(synth::generate_synthetic_an(spec), neurocode::Error);
}

TEST_CASE("spec JSON round trip") {
  auto spec = small_spec();
  spec.snr_db = 12.5;
  spec.atom_sign = {1, -1, 1, -1, 1, -1};
  const auto back = synth::spec_from_json(synth::to_json(spec));
  CHECK(back.t == spec.t);
  CHECK(back.snr_db == 12.5);
  CHECK(std::isinf(back.fmri_snr_db));
  CHECK(back.atom_sign == spec.atom_sign);
  CHECK(back.seed == spec.seed);
  CHECK(std::isinf(synth::spec_from_json({{"snr_db", "inf"}}).snr_db));
  CHECK(std::isinf(synth::spec_from_json({{"snr_db", nullptr}}).snr_db));
  CHECK_THROWS_AS(synth::spec_from_json({{"snr_db", "loud"}}), neurocode::Error);
}
