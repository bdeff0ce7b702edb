#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "neurocode/error.hpp"
#include "neurocode/stat_map.hpp"
#include "../support.hpp"

namespace sm = neurocode::stat_map;
using Eigen::MatrixXd;

namespace {

// Quadratic-time reference: q_i = min over p_j >= p_i of p_j * m / rank_j.
std::vector<double> naive_q(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> q(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (p[j] < p[i]) continue;
      std::size_t rank = 0;
      for (std::size_t r = 0; r < m; ++r) rank += (p[r] < p[j] || (p[r] == p[j] && r <= j)) ? 1 : 0;
      best = std::min(best, p[j] * static_cast<double>(m) / static_cast<double>(rank));
    }
    q[i] = best;
  }
  return q;
}

std::vector<bool> mask_of(std::size_t n, std::initializer_list<std::size_t> on) {
  std::vector<bool> m(n, false);
  for (auto i : on) m[i] = true;
  return m;
}

sm::BNMap map_from(std::size_t atom, const std::vector<bool>& m, std::int8_t sign = 1) {
  sm::BNMap b{atom, std::vector<std::int8_t>(m.size(), 0)};
  for (std::size_t i = 0; i < m.size(); ++i) b.signs[i] = m[i] ? sign : 0;
  return b;
}

}  // namespace

TEST_CASE("one-sample t-test examples") {
  const std::vector<double> v = {1, 2, 3};
  const auto r = sm::one_sample_ttest(v);
  CHECK(r.t == doctest::Approx(std::sqrt(12.0)).epsilon(1e-12));
  CHECK(std::abs(r.t - 3.4641) <= 1e-3);
  // Student t with 2 dof: two-sided p = 1 - |t| / sqrt(2 + t^2).
  CHECK(r.p == doctest::Approx(1.0 - r.t / std::sqrt(2.0 + r.t * r.t)).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.0742).epsilon(1e-3));

  const auto zero = sm::one_sample_ttest(std::vector<double>{0, 0, 0});
  CHECK(std::isnan(zero.t));
  CHECK(zero.p == 1.0);
  const auto sym = sm::one_sample_ttest(std::vector<double>{-1, 1});
  CHECK(sym.t == 0.0);
  CHECK(sym.p == 1.0);
}

TEST_CASE("group t-test shapes, errors and antisymmetry") {
  std::mt19937_64 rng(51);
  std::vector<MatrixXd> stack;
  for (int s = 0; s < 5; ++s) stack.push_back(testsupport::gaussian(4, 30, rng).array() + 0.5);
  stack[0].col(3).setZero();
  for (auto& m : stack) m.col(3).setZero();
  const auto stat = sm::group_ttest(stack);
  CHECK(stat.n_subjects == 5);
  CHECK(!stat.defined(0, 3));
  CHECK(stat.p_values(0, 3) == 1.0);
  CHECK(stat.p_values.minCoeff() >= 0.0);
  CHECK(stat.p_values.maxCoeff() <= 1.0);

  std::vector<MatrixXd> neg;
  for (const auto& m : stack) neg.push_back(-m);
  const auto flipped = sm::group_ttest(neg);
  for (Eigen::Index a = 0; a < 4; ++a) {
    for (Eigen::Index v = 0; v < 30; ++v) {
      if (!stat.defined(a, v)) continue;
      CHECK(flipped.t_stats(a, v) == -stat.t_stats(a, v));
      CHECK(flipped.p_values(a, v) == stat.p_values(a, v));
    }
  }
  const auto serial = sm::group_ttest_serial(stack);
  CHECK(((stat.t_stats.array() == serial.t_stats.array()) || (stat.t_stats.array().isNaN() && serial.t_stats.array().isNaN())).all());
  CHECK(stat.q_values.cwiseEqual(serial.q_values).all());

  const std::vector<MatrixXd> one = {stack[0]};
  CHECK_THROWS_AS(sm::group_ttest(one), neurocode::Error);
}

TEST_CASE("Benjamini-Hochberg examples") {
  const auto all = sm::fdr_bh(std::vector<double>{0.01, 0.02, 0.03, 0.04}, 0.05);
  CHECK(std::count(all.mask.begin(), all.mask.end(), true) == 4);
  const auto none = sm::fdr_bh(std::vector<double>{1, 1, 1}, 0.05);
  CHECK(std::count(none.mask.begin(), none.mask.end(), true) == 0);
  const auto single = sm::fdr_bh(std::vector<double>{0.04}, 0.05);
  CHECK(single.mask[0]);
  CHECK_THROWS_AS(sm::fdr_bh(std::vector<double>{0.5, 1.2}, 0.05), neurocode::Error);
}

TEST_CASE("BH q-values match the reference and masks nest") {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> p(1 + trial * 3);
    for (auto& v : p) v = std::pow(u(rng), 3.0);
    if (trial % 5 == 0 && p.size() > 2) p[1] = p[2];
    const auto r05 = sm::fdr_bh(p, 0.05);
    const auto r01 = sm::fdr_bh(p, 0.01);
    const auto ref = naive_q(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(r05.q_values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(r05.q_values[i] >= p[i]);
      CHECK(r05.mask[i] == (ref[i] <= 0.05));
      if (r01.mask[i]) CHECK(r05.mask[i]);
    }
  }
}

TEST_CASE("threshold maps") {
  std::mt19937_64 rng(53);
  const Eigen::Index n = 400;
  std::vector<MatrixXd> stack;
  for (int s = 0; s < 8; ++s) {
    MatrixXd m = testsupport::gaussian(2, n, rng);
    m.row(0).head(100).array() += 3.0;  // planted positive region
    stack.push_back(m);
  }
  const auto maps = sm::threshold_map(sm::group_ttest(stack), 0.05);
  REQUIRE(maps.size() == 2);
  for (Eigen::Index v = 0; v < 100; ++v) CHECK(maps[0].signs[static_cast<std::size_t>(v)] == 1);
  std::size_t false_pos = 0;
  for (Eigen::Index v = 100; v < n; ++v) false_pos += maps[0].signs[static_cast<std::size_t>(v)] != 0;
  CHECK(false_pos <= static_cast<std::size_t>(0.05 * 300));
  CHECK(maps[1].support_size() <= static_cast<std::size_t>(0.05 * n));

  std::vector<MatrixXd> neg;
  for (const auto& m : stack) neg.push_back(-m);
  const auto flipped = sm::threshold_map(sm::group_ttest(neg), 0.05);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t v = 0; v < static_cast<std::size_t>(n); ++v) CHECK(flipped[a].signs[v] == -maps[a].signs[v]);

  std::vector<MatrixXd> noise;
  for (int s = 0; s < 3; ++s) noise.push_back(testsupport::gaussian(1, 5, rng));
  noise[0](0, 0) = 1e-3;
  const auto quiet = sm::threshold_map(sm::group_ttest(noise), 1e-9);
  CHECK(quiet[0].support_size() == 0);
}

TEST_CASE("Dice examples and properties") {
  const auto a = mask_of(10, {0, 1, 2, 3});
  const auto b = mask_of(10, {1, 2, 3, 4, 5, 6});
  CHECK(sm::dice(a, b) == 0.6);
  CHECK(sm::dice(a, a) == 1.0);
  CHECK(sm::dice(a, mask_of(10, {7, 8})) == 0.0);
  CHECK_THROWS_AS(sm::dice(mask_of(10, {}), mask_of(10, {})), neurocode::Error);

  std::mt19937_64 rng(54);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<bool> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) x[i] = coin(rng), y[i] = coin(rng);
    x[trial % 50] = true;
    const double d = sm::dice(x, y);
    CHECK(d == sm::dice(y, x));
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK(sm::dice(x, x) == 1.0);
  }
}

TEST_CASE("parcel counting") {
  const std::size_t n = 68, regions = 17;
  sm::Parcellation parc;
  for (std::size_t v = 0; v < n; ++v) parc.labels.push_back(v / 4);
  parc.region_names = sm::default_region_names(regions);
  REQUIRE_NOTHROW(parc.validate(n));

  std::vector<sm::BNMap> maps;
  for (std::size_t i = 0; i < 10; ++i) maps.push_back(map_from(i, sm::region_mask(parc, 3), i % 2 ? 1 : -1));
  auto counts = sm::count_parcel_activations(maps, parc, 0.7);
  for (std::size_t r = 0; r < regions; ++r) CHECK(counts[r] == (r == 3 ? 10u : 0u));

  std::vector<sm::BNMap> empty(5, sm::BNMap{0, std::vector<std::int8_t>(n, 0)});
  for (auto c : sm::count_parcel_activations(empty, parc, 0.7)) CHECK(c == 0);

  // 128 atoms planted on regions a % 17.
  std::vector<sm::BNMap> planted;
  std::vector<std::size_t> expected(regions, 0);
  for (std::size_t a = 0; a < 128; ++a) {
    planted.push_back(map_from(a, sm::region_mask(parc, a % regions), a % 3 ? 1 : -1));
    ++expected[a % regions];
  }
  counts = sm::count_parcel_activations(planted, parc, 0.7);
  CHECK(counts == expected);
  for (auto c : counts) CHECK(c <= 128);
}

TEST_CASE("Dice modes differ on maps that spill past a region") {
  sm::Parcellation parc;
  parc.labels = {0, 0, 0, 0, 1, 1, 1, 1};
  parc.region_names = {"a", "b"};
  const auto spill = map_from(0, mask_of(8, {0, 1, 2, 3, 4, 5}));
  CHECK(sm::region_dice(spill, parc, 0, sm::DiceMode::whole) == doctest::Approx(0.8));
  CHECK(sm::region_dice(spill, parc, 0, sm::DiceMode::region) == 1.0);
  CHECK(sm::region_dice(spill, parc, 1, sm::DiceMode::region) == doctest::Approx(2.0 * 2 / 6));
}

TEST_CASE("parcellation validation") {
  sm::Parcellation parc;
  parc.labels = {0, 1, 2};
  parc.region_names = {"a", "b"};
  CHECK_THROWS_AS(parc.validate(3), neurocode::Error);
  parc.region_names.push_back("c");
  CHECK_NOTHROW(parc.validate(3));
  CHECK_THROWS_AS(parc.validate(4), neurocode::Error);
  CHECK(sm::default_region_names().size() == 17);
}
