#include "neurocode/stat_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "neurocode/error.hpp"

namespace neurocode::stat_map {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_stack(std::span<const Eigen::MatrixXd> stack) {
  if (stack.size() < 2) throw Error(ErrorKind::invalid_argument, "group t-test needs at least 2 subjects");
  for (const auto& m : stack) {
    if (m.rows() != stack[0].rows() || m.cols() != stack[0].cols()) {
      throw Error(ErrorKind::shape_mismatch, "subject coefficient matrices differ in shape");
    }
  }
}

StatMap empty_map(std::span<const Eigen::MatrixXd> stack) {
  const Eigen::Index k = stack[0].rows();
  const Eigen::Index n = stack[0].cols();
  return StatMap{Eigen::MatrixXd(k, n), Eigen::MatrixXd(k, n), Eigen::MatrixXd::Ones(k, n), stack.size()};
}

void test_cell(std::span<const Eigen::MatrixXd> stack, Eigen::Index a, Eigen::Index v,
               std::vector<double>& scratch, StatMap& out) {
  for (std::size_t s = 0; s < stack.size(); ++s) scratch[s] = stack[s](a, v);
  const auto r = one_sample_ttest(scratch);
  out.t_stats(a, v) = r.t;
  out.p_values(a, v) = r.p;
}

// BH over the defined voxels of one atom.
void fill_q_values(StatMap& map, Eigen::Index a) {
  std::vector<double> p;
  std::vector<Eigen::Index> where;
  for (Eigen::Index v = 0; v < map.t_stats.cols(); ++v) {
    if (map.defined(a, v)) {
      p.push_back(map.p_values(a, v));
      where.push_back(v);
    }
  }
  map.q_values.row(a).setOnes();
  if (p.empty()) return;
  const auto fdr = fdr_bh(p, 0.05);
  for (std::size_t i = 0; i < where.size(); ++i) map.q_values(a, where[i]) = fdr.q_values[i];
}

}  // namespace

std::size_t BNMap::support_size() const {
  return static_cast<std::size_t>(std::count_if(signs.begin(), signs.end(), [](auto s) { return s != 0; }));
}

std::vector<std::size_t> Parcellation::region_voxels(std::size_t region) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == region) out.push_back(v);
  }
  return out;
}

void Parcellation::validate(std::size_t voxel_count) const {
  if (region_names.empty()) throw Error(ErrorKind::invalid_argument, "parcellation needs at least one region");
  if (labels.size() != voxel_count) {
    throw Error(ErrorKind::shape_mismatch, "parcellation covers " + std::to_string(labels.size()) +
                                               " voxels, expected " + std::to_string(voxel_count));
  }
  for (auto l : labels) {
    if (l >= region_names.size()) throw Error(ErrorKind::invalid_argument, "parcellation label out of range");
  }
}

std::vector<std::string> default_region_names(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t r = 0; r < count; ++r) names.push_back("network_" + std::to_string(r + 1));
  return names;
}

OneSampleResult one_sample_ttest(std::span<const double> values) {
  const std::size_t m = values.size();
  if (m < 2) throw Error(ErrorKind::invalid_argument, "one-sample t-test needs at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  if (!(sd > 0.0)) return {kNaN, 1.0};
  const double t = mean / (sd / std::sqrt(static_cast<double>(m)));
  const boost::math::students_t_distribution<double> dist(static_cast<double>(m - 1));
  const double p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  return {t, p};
}

StatMap group_ttest(std::span<const Eigen::MatrixXd> stack) {
  check_stack(stack);
  StatMap out = empty_map(stack);
  const Eigen::Index k = out.t_stats.rows();
  const Eigen::Index n = out.t_stats.cols();
#pragma omp parallel
  {
    std::vector<double> scratch(stack.size());
#pragma omp for schedule(static)
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index v = 0; v < n; ++v) test_cell(stack, a, v, scratch, out);
      fill_q_values(out, a);
    }
  }
  return out;
}

StatMap group_ttest_serial(std::span<const Eigen::MatrixXd> stack) {
  check_stack(stack);
  StatMap out = empty_map(stack);
  std::vector<double> scratch(stack.size());
  for (Eigen::Index a = 0; a < out.t_stats.rows(); ++a) {
    for (Eigen::Index v = 0; v < out.t_stats.cols(); ++v) test_cell(stack, a, v, scratch, out);
    fill_q_values(out, a);
  }
  return out;
}

FdrResult fdr_bh(std::span<const double> p, double q_level) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::invalid_argument, "p-values must lie in [0, 1]");
  }
  const std::size_t m = p.size();
  FdrResult out{std::vector<bool>(m, false), std::vector<double>(m, 1.0)};
  if (m == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return p[l] < p[r]; });

  double running = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const std::size_t i = order[rank - 1];
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(rank));
    // q >= p holds exactly; the clamp only undoes rounding in p * m / m.
    out.q_values[i] = std::max(running, p[i]);
  }
  // Step-up: reject the `cutoff` smallest p-values, cutoff = max{i : p_(i) <= i q / m}.
  std::size_t cutoff = 0;
  for (std::size_t rank = 1; rank <= m; ++rank) {
    if (p[order[rank - 1]] <= static_cast<double>(rank) * q_level / static_cast<double>(m)) cutoff = rank;
  }
  for (std::size_t rank = 1; rank <= cutoff; ++rank) out.mask[order[rank - 1]] = true;
  return out;
}

std::vector<BNMap> threshold_map(const StatMap& stat, double q_level) {
  std::vector<BNMap> maps(static_cast<std::size_t>(stat.t_stats.rows()));
  for (Eigen::Index a = 0; a < stat.t_stats.rows(); ++a) {
    BNMap& map = maps[static_cast<std::size_t>(a)];
    map.atom_id = static_cast<std::size_t>(a);
    map.signs.assign(static_cast<std::size_t>(stat.t_stats.cols()), 0);
    for (Eigen::Index v = 0; v < stat.t_stats.cols(); ++v) {
      if (!stat.defined(a, v) || !(stat.q_values(a, v) <= q_level)) continue;
      const double t = stat.t_stats(a, v);
      map.signs[static_cast<std::size_t>(v)] = t > 0 ? 1 : (t < 0 ? -1 : 0);
    }
  }
  return maps;
}

double dice(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::shape_mismatch, "Dice masks differ in length");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i];
    nb += b[i];
    both += a[i] && b[i];
  }
  if (na + nb == 0) throw Error(ErrorKind::invalid_argument, "Dice is undefined for two empty masks");
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<bool> support_mask(const BNMap& map) {
  std::vector<bool> mask(map.signs.size());
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = map.signs[v] != 0;
  return mask;
}

std::vector<bool> region_mask(const Parcellation& parcellation, std::size_t region) {
  std::vector<bool> mask(parcellation.labels.size());
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = parcellation.labels[v] == region;
  return mask;
}

double region_dice(const BNMap& map, const Parcellation& parcellation, std::size_t region, DiceMode mode) {
  parcellation.validate(map.signs.size());
  const auto target = region_mask(parcellation, region);
  auto support = support_mask(map);
  if (mode == DiceMode::region) {
    for (std::size_t v = 0; v < support.size(); ++v) support[v] = support[v] && target[v];
  }
  const bool any = std::any_of(support.begin(), support.end(), [](bool b) { return b; }) ||
                   std::any_of(target.begin(), target.end(), [](bool b) { return b; });
  return any ? dice(support, target) : 0.0;
}

std::vector<std::size_t> count_parcel_activations(std::span<const BNMap> maps, const Parcellation& parcellation,
                                                  double dice_threshold, DiceMode mode) {
  std::vector<std::size_t> counts(parcellation.regions(), 0);
  for (const auto& map : maps) {
    if (map.support_size() == 0) continue;
    for (std::size_t r = 0; r < parcellation.regions(); ++r) {
      if (region_dice(map, parcellation, r, mode) > dice_threshold) ++counts[r];
    }
  }
  return counts;
}

}  // namespace neurocode::stat_map
