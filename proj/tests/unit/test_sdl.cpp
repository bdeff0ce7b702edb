#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "neurocode/column_stats.hpp"
#include "neurocode/error.hpp"
#include "neurocode/sdl.hpp"
#include "neurocode/synth.hpp"
#include "../support.hpp"

namespace sdl = neurocode::sdl;
namespace synth = neurocode::synth;
using Eigen::MatrixXd;

namespace {

MatrixXd planted_x(std::size_t k_true, double snr_db, std::uint64_t seed, MatrixXd* d_true = nullptr) {
  synth::SynthSpec spec;
  spec.t = 200;
  spec.n_an = 500;
  spec.k_true = k_true;
  spec.sparsity = 3;
  spec.snr_db = snr_db;
  spec.seed = seed;
  auto [x, truth] = synth::generate_synthetic_an(spec);
  if (d_true) *d_true = truth.d_true;
  return neurocode::column_stats::standardize_columns(x).values;
}

}  // namespace

TEST_CASE("init with k = n is a permutation of normalized columns") {
  std::mt19937_64 rng(41);
  const MatrixXd x = testsupport::gaussian(7, 5, rng);
  const auto d = sdl::init_dictionary(x, 5, 3);
  std::set<Eigen::Index> used;
  for (Eigen::Index j = 0; j < 5; ++j) {
    CHECK(d.atoms.col(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index c = 0; c < 5; ++c) {
      if ((d.atoms.col(j) - x.col(c).normalized()).norm() < 1e-12) used.insert(c);
    }
  }
  CHECK(used.size() == 5);
  CHECK(sdl::init_dictionary(x, 5, 3).atoms.cwiseEqual(d.atoms).all());
  CHECK_THROWS_AS(sdl::init_dictionary(x, 6, 3), neurocode::Error);
  CHECK_THROWS_AS(sdl::init_dictionary(x, 0, 3), neurocode::Error);
}

TEST_CASE("init never picks a zero column") {
  std::mt19937_64 rng(42);
  MatrixXd x = testsupport::gaussian(6, 4, rng);
  x.col(2).setZero();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto d = sdl::init_dictionary(x, 3, seed);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(d.atoms.col(j).norm() == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(sdl::init_dictionary(x, 4, 0), neurocode::Error);
}

TEST_CASE("sparse coding examples") {
  std::mt19937_64 rng(43);
  MatrixXd atoms = testsupport::gaussian(30, 6, rng);
  atoms.colwise().normalize();
  const sdl::Dictionary d{atoms};

  const MatrixXd x = testsupport::gaussian(30, 4, rng);
  const double big = 2.0 * (atoms.transpose() * x).cwiseAbs().maxCoeff();
  CHECK(sdl::sparse_code(x, d, big).values.isZero(0.0));

  const auto a = sdl::sparse_code(atoms.col(3), d, 0.02).values;
  CHECK(std::abs(a(3, 0) - 0.99) < 1e-9);
  CHECK((a.array() != 0.0).count() == 1);

  MatrixXd square = testsupport::gaussian(6, 6, rng);
  square.colwise().normalize();
  const MatrixXd y = testsupport::gaussian(6, 3, rng);
  const auto exact = sdl::sparse_code(y, sdl::Dictionary{square}, 0.0).values;
  CHECK((square * exact - y).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(sdl::sparse_code(testsupport::gaussian(29, 2, rng), d, 0.1), neurocode::Error);
}

TEST_CASE("parallel and serial coding are bitwise identical") {
  std::mt19937_64 rng(44);
  MatrixXd atoms = testsupport::gaussian(40, 9, rng);
  atoms.colwise().normalize();
  const MatrixXd x = testsupport::gaussian(40, 211, rng);
  const auto a = sdl::sparse_code(x, {atoms}, 0.3).values;
  const auto b = sdl::sparse_code_serial(x, {atoms}, 0.3).values;
  CHECK(a.cwiseEqual(b).all());
}

TEST_CASE("rank one data is recovered with one atom") {
  std::mt19937_64 rng(45);
  Eigen::VectorXd s = testsupport::gaussian_vector(50, rng);
  s.normalize();
  const Eigen::RowVectorXd u = testsupport::gaussian(1, 30, rng);
  const MatrixXd x = s * u;
  sdl::LearnOptions opt;
  opt.k = 1;
  opt.lambda = 0.01;
  opt.epochs = 5;
  opt.batch_size = 8;
  const auto fit = sdl::learn_dictionary(x, opt);
  CHECK(std::abs(fit.dictionary.atoms.col(0).dot(s)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("planted dictionary is recovered with a monotone trace") {
  MatrixXd d_true;
  const MatrixXd x = planted_x(8, synth::kNoiseless, 0, &d_true);
  sdl::LearnOptions opt;
  opt.k = 8;
  opt.lambda = 2.0;
  const auto fit = sdl::learn_dictionary(x, opt);
  const auto match = synth::match_dictionaries(fit.dictionary.atoms, d_true);
  CHECK(match.min_abs_correlation() > 0.99);

  REQUIRE(fit.report.objective_trace.size() == opt.epochs);
  double prev = fit.report.initial_objective;
  for (double v : fit.report.objective_trace) {
    CHECK(v <= prev * (1.0 + 1e-6));
    prev = v;
  }
  CHECK(fit.dictionary.atoms.colwise().norm().maxCoeff() <= 1.0 + 1e-9);
  CHECK(fit.report.seed == opt.seed);
  CHECK(fit.report.per_column_r2.size() == 500);
  CHECK(fit.codes.values.cols() == 500);
  CHECK(sdl::objective(x, fit.dictionary, fit.codes, opt.lambda) == doctest::Approx(fit.report.objective_trace.back()));
}

TEST_CASE("identical inputs give a bitwise identical dictionary") {
  const MatrixXd x = planted_x(6, 20.0, 1);
  sdl::LearnOptions opt;
  opt.k = 6;
  opt.lambda = 1.0;
  opt.epochs = 4;
  opt.batch_size = 32;
  opt.seed = 9;
  const auto a = sdl::learn_dictionary(x, opt);
  const auto b = sdl::learn_dictionary(x, opt);
  CHECK(a.dictionary.atoms.cwiseEqual(b.dictionary.atoms).all());
  CHECK(a.codes.values.cwiseEqual(b.codes.values).all());
  CHECK(a.report.objective_trace == b.report.objective_trace);
}

TEST_CASE("larger lambda never gives denser codes") {
  const MatrixXd x = planted_x(8, 20.0, 2);
  double prev = -1.0;
  for (double lambda : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    sdl::LearnOptions opt;
    opt.k = 8;
    opt.lambda = lambda;
    opt.epochs = 5;
    const double sparsity = sdl::learn_dictionary(x, opt).codes.sparsity();
    CHECK(sparsity >= prev);
    prev = sparsity;
  }
}

TEST_CASE("norm constraint holds after every epoch count") {
  const MatrixXd x = planted_x(8, 10.0, 3);
  for (std::size_t epochs : {1, 2, 3}) {
    sdl::LearnOptions opt;
    opt.k = 12;
    opt.lambda = 0.15;
    opt.epochs = epochs;
    opt.batch_size = 50;
    const auto fit = sdl::learn_dictionary(x, opt);
    CHECK(fit.dictionary.atoms.colwise().norm().maxCoeff() <= 1.0 + 1e-9);
    CHECK(fit.dictionary.atoms.allFinite());
  }
}

TEST_CASE("learning preconditions") {
  sdl::LearnOptions opt;
  opt.k = 3;
  CHECK_THROWS_AS(sdl::learn_dictionary(MatrixXd::Zero(10, 5), opt), neurocode::Error);
  opt.k = 6;
  std::mt19937_64 rng(46);
  CHECK_THROWS_AS(sdl::learn_dictionary(testsupport::gaussian(10, 5, rng), opt), neurocode::Error);
  opt.k = 2;
  opt.epochs = 0;
  CHECK_THROWS_AS(sdl::learn_dictionary(testsupport::gaussian(10, 5, rng), opt), neurocode::Error);
}

TEST_CASE("reconstruction R2") {
  std::mt19937_64 rng(47);
  MatrixXd atoms = testsupport::gaussian(20, 3, rng);
  atoms.colwise().normalize();
  const MatrixXd a = testsupport::gaussian(3, 10, rng);
  MatrixXd x = atoms * a;
  for (double r2 : sdl::reconstruction_r2(x, {atoms}, {a})) CHECK(r2 == doctest::Approx(1.0).epsilon(1e-12));

  MatrixXd centered = testsupport::gaussian(20, 4, rng);
  centered.rowwise() -= centered.colwise().mean();
  for (double r2 : sdl::reconstruction_r2(centered, {atoms}, {MatrixXd::Zero(3, 4)})) {
    CHECK(r2 == doctest::Approx(0.0).epsilon(1e-12));
  }

  x.col(4).setConstant(3.0);
  CHECK(std::isnan(sdl::reconstruction_r2(x, {atoms}, {a})[4]));
}

TEST_CASE("zero-variance activation columns are dropped and scattered back") {
  MatrixXd raw = planted_x(4, 20.0, 5).leftCols(120);
  raw.col(7).setConstant(2.0);
  raw.col(50).setZero();
  sdl::LearnOptions opt;
  opt.k = 4;
  opt.lambda = 1.0;
  opt.epochs = 3;
  const auto fit = sdl::learn_from_activations(raw, opt);
  REQUIRE(fit.codes.values.cols() == 120);
  CHECK(fit.codes.values.col(7).isZero(0.0));
  CHECK(fit.codes.values.col(50).isZero(0.0));
  CHECK(std::isnan(fit.report.per_column_r2[7]));
  CHECK(std::isnan(fit.report.per_column_r2[50]));
  CHECK(!std::isnan(fit.report.per_column_r2[8]));
}
