// Parallel kernels against their serial references.
// Worker count follows OMP_NUM_THREADS / NEUROCODE_THREADS.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <unistd.h>

#include "neurocode/an_construct.hpp"
#include "neurocode/encoder.hpp"
#include "neurocode/hrf.hpp"
#include "neurocode/parallel.hpp"
#include "neurocode/sdl.hpp"
#include "neurocode/stat_map.hpp"
#include "neurocode/tensor_io.hpp"

namespace {

using Eigen::MatrixXd;

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

neurocode::sdl::Dictionary dictionary(Eigen::Index t, Eigen::Index k) {
  MatrixXd d = gaussian(t, k, 7);
  d.rowwise() -= d.colwise().mean();
  d.colwise().normalize();
  return neurocode::sdl::Dictionary{d};
}

std::filesystem::path dump_dir() {
  return std::filesystem::temp_directory_path() / ("neurocode_bench_" + std::to_string(getpid()));
}

// 6 layers x 12 heads x 64 dims, 40 timesteps of 50 tokens, written once per process.
const neurocode::tensor_io::QKManifest& dump() {
  static const neurocode::tensor_io::QKManifest manifest = [] {
    namespace tio = neurocode::tensor_io;
    const auto dir = dump_dir();
    std::filesystem::create_directories(dir / "qk");
    tio::QKManifest m;
    m.model_name = "bench";
    m.num_layers = 6;
    m.num_heads = 12;
    m.head_dim = 64;
    m.num_timesteps = 40;
    m.seq_len.assign(40, 50);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> payload(12 * 50 * 64);
    for (std::size_t t = 0; t < 40; ++t) {
      for (std::size_t l = 0; l < 6; ++l) {
        tio::QKEntry e{t, l, {}, {}};
        for (const char* kind : {"q", "k"}) {
          for (auto& v : payload) v = u(rng);
          const auto path = dir / "qk" / (std::string(kind) + "_t" + std::to_string(t) + "_l" + std::to_string(l) + ".antx");
          tio::write_tensor(path, {12, 50, 64}, payload);
          (kind[0] == 'q' ? e.q_path : e.k_path) = path;
        }
        m.entries.push_back(e);
      }
    }
    tio::save_manifest(dir / "manifest.json", m);
    return tio::load_manifest(dir / "manifest.json");
  }();
  return manifest;
}

void BM_build_an(benchmark::State& state) {
  const auto& m = dump();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::an::build_activation_matrix(m));
}
void BM_build_an_serial(benchmark::State& state) {
  const auto& m = dump();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::an::build_activation_matrix_serial(m));
}

void BM_hrf(benchmark::State& state) {
  const MatrixXd x = gaussian(600, 4608, 1);
  const auto kernel = neurocode::hrf::canonical_hrf();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::hrf::convolve_hrf(x, kernel));
}
void BM_hrf_serial(benchmark::State& state) {
  const MatrixXd x = gaussian(600, 4608, 1);
  const auto kernel = neurocode::hrf::canonical_hrf();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::hrf::convolve_hrf_serial(x, kernel));
}

void BM_sparse_code(benchmark::State& state) {
  const MatrixXd x = gaussian(200, 2000, 2);
  const auto d = dictionary(200, 64);
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::sdl::sparse_code(x, d, 2.0));
}
void BM_sparse_code_serial(benchmark::State& state) {
  const MatrixXd x = gaussian(200, 2000, 2);
  const auto d = dictionary(200, 64);
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::sdl::sparse_code_serial(x, d, 2.0));
}

void BM_encode(benchmark::State& state) {
  const neurocode::encoder::VoxelMatrix s{gaussian(300, 4000, 4), "bench"};
  const auto d = dictionary(300, 64);
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::encoder::encode_voxels(s, d, 0.2));
}
void BM_encode_serial(benchmark::State& state) {
  const neurocode::encoder::VoxelMatrix s{gaussian(300, 4000, 4), "bench"};
  const auto d = dictionary(300, 64);
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::encoder::encode_voxels_serial(s, d, 0.2));
}

std::vector<MatrixXd> coefficient_stack() {
  std::vector<MatrixXd> stack;
  for (std::uint64_t s = 0; s < 8; ++s) stack.push_back(gaussian(64, 20000, 10 + s));
  return stack;
}
void BM_group_ttest(benchmark::State& state) {
  const auto stack = coefficient_stack();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::stat_map::group_ttest(stack));
}
void BM_group_ttest_serial(benchmark::State& state) {
  const auto stack = coefficient_stack();
  for (auto _ : state) benchmark::DoNotOptimize(neurocode::stat_map::group_ttest_serial(stack));
}

}  // namespace

BENCHMARK(BM_build_an)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_an_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_hrf)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_hrf_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sparse_code)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sparse_code_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_encode)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_encode_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_group_ttest)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_group_ttest_serial)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  neurocode::configure_threads_from_env();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  std::filesystem::remove_all(dump_dir());
  return 0;
}
