#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "neurocode/error.hpp"
#include "neurocode/pipeline.hpp"
#include "neurocode/synth.hpp"
#include "neurocode/tensor_io.hpp"
#include "../support.hpp"
#include "../toy_dump.hpp"

namespace np = neurocode::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

np::PipelineConfig small_synthetic(const fs::path& out) {
  np::PipelineConfig cfg;
  cfg.output_dir = out;
  cfg.hp.k = 6;
  cfg.hp.lambda_an = 1.0;
  cfg.hp.epochs = 3;
  cfg.hp.batch = 32;
  cfg.run_hrf = false;
  neurocode::synth::SynthSpec spec;
  spec.t = 60;
  spec.n_an = 150;
  spec.k_true = 6;
  spec.sparsity = 2;
  spec.n_subjects = 3;
  spec.n_voxels = 90;
  spec.n_regions = 3;
  spec.fmri_snr_db = 10.0;
  spec.seed = 2;
  cfg.synthetic = spec;
  return cfg;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t cached_count(const np::RunSummary& s) {
  std::size_t n = 0;
  for (const auto& st : s.stages) n += st.cached;
  return n;
}

bool ran(const np::RunSummary& s, const std::string& stage) {
  for (const auto& st : s.stages)
    if (st.stage == stage) return !st.cached;
  return false;
}

}  // namespace

TEST_CASE("default hyperparameters") {
  const np::Hyperparameters hp;
  CHECK(hp.k == 128);
  CHECK(hp.lambda_an == 0.15);
  CHECK(hp.lambda_fmri == 0.2);
  CHECK(hp.tr == 1.0);
  CHECK(hp.q == 0.05);
  CHECK(hp.dice == 0.7);
  const auto cfg = np::config_from_json(json::object(), "/tmp");
  CHECK(cfg.hp.k == 128);
  CHECK(cfg.hp.lambda_an == 0.15);
  CHECK(cfg.hp.lambda_fmri == 0.2);
}

TEST_CASE("negative lambda_fmri fails before any stage runs") {
  testsupport::TempDir dir("pipe");
  auto cfg = small_synthetic(dir / "run");
  cfg.hp.lambda_fmri = -1.0;
  CHECK_THROWS_AS(np::run_pipeline(cfg), neurocode::Error);
  CHECK(!fs::exists(dir / "run"));
  for (auto bad : {0.0, 1.5}) {
    cfg = small_synthetic(dir / "run");
    cfg.hp.q = bad;
    CHECK_THROWS_AS(cfg.validate(), neurocode::Error);
  }
  cfg = small_synthetic(dir / "run");
  cfg.synthetic.reset();
  CHECK_THROWS_AS(cfg.validate(), neurocode::Error);
}

TEST_CASE("synthetic run, cache hits, provenance and reruns") {
  testsupport::TempDir dir("pipe");
  auto cfg = small_synthetic(dir / "run");
  const auto first = np::run_pipeline(cfg);
  CHECK(cached_count(first) == 0);
  for (const auto* stage : {"synth", "learn-dict", "encode", "stats", "map", "analyze", "report"}) CHECK(ran(first, stage));

  const auto second = np::run_pipeline(cfg);
  CHECK(cached_count(second) == second.stages.size());

  // Every artifact is covered by a provenance record with hashes, config hash and seed.
  std::set<std::string> covered;
  for (const auto& entry : fs::directory_iterator(dir / "run" / "provenance")) {
    const auto doc = read_json(entry.path());
    CHECK(doc.contains("config_hash"));
    CHECK(doc.contains("seed"));
    CHECK(doc.contains("inputs"));
    for (const auto& [name, hash] : doc["outputs"].items()) {
      CHECK(hash.get<std::string>().size() == 64);
      CHECK(np::sha256_file(dir / "run" / name) == hash.get<std::string>());
      covered.insert(name);
    }
  }
  for (const auto& f : fs::recursive_directory_iterator(dir / "run")) {
    if (!f.is_regular_file()) continue;
    const auto rel = fs::relative(f.path(), dir / "run").generic_string();
    if (rel.rfind("provenance/", 0) == 0 || rel == "run.json") continue;
    CHECK_MESSAGE(covered.count(rel) == 1, rel);
  }

  // Changing an encoding setting reruns encode and everything after it only.
  cfg.hp.lambda_fmri = 0.3;
  const auto third = np::run_pipeline(cfg);
  CHECK(!ran(third, "synth"));
  CHECK(!ran(third, "learn-dict"));
  CHECK(ran(third, "encode"));
  CHECK(ran(third, "report"));

  // A tampered output forces its stage to run again.
  std::ofstream(dir / "run" / "branches" / "synthetic" / "dict" / "an_r2.csv", std::ios::app) << "x\n";
  const auto fourth = np::run_pipeline(cfg);
  CHECK(ran(fourth, "learn-dict"));
}

TEST_CASE("report bundle families and missing stages") {
  testsupport::TempDir dir("pipe");
  const auto cfg = small_synthetic(dir / "run");
  np::run_pipeline(cfg);
  const auto bundle = dir / "run" / "report";
  CHECK(fs::exists(bundle / "r2_histograms.csv"));
  CHECK(fs::exists(bundle / "region_counts.csv"));
  CHECK(fs::exists(bundle / "redundancy" / "synthetic_atom_correlation.csv"));
  CHECK(fs::exists(bundle / "pairs.json"));

  const auto hist = read_text(bundle / "r2_histograms.csv");
  CHECK(hist.rfind("branch,kind,bin_lo,bin_hi,count\n", 0) == 0);
  CHECK(read_text(bundle / "region_counts.csv").rfind("region,name,synthetic\n", 0) == 0);

  np::report(dir / "run", dir / "again");
  for (const auto* f : {"r2_histograms.csv", "region_counts.csv", "pairs.json", "r2_subjects.csv"}) {
    CHECK(read_text(bundle / f) == read_text(dir / "again" / f));
  }

  fs::remove_all(dir / "run" / "branches" / "synthetic" / "stats");
  try {
    np::report(dir / "run", dir / "broken");
    FAIL("report should fail");
  } catch (const neurocode::Error& e) {
    CHECK(std::string(e.what()).find("stats") != std::string::npos);
  }
}

TEST_CASE("a failing stage is named and earlier artifacts stay") {
  testsupport::TempDir dir("pipe");
  auto cfg = small_synthetic(dir / "run");
  cfg.hp.k = 500;  // more atoms than AN columns
  try {
    np::run_pipeline(cfg);
    FAIL("run should fail");
  } catch (const neurocode::Error& e) {
    CHECK(e.kind() == neurocode::ErrorKind::stage_failed);
    CHECK(std::string(e.what()).find("learn-dict") != std::string::npos);
  }
  CHECK(fs::exists(dir / "run" / "synth" / "X.antx"));
  CHECK(fs::exists(dir / "run" / "provenance" / "global.synth.json"));
}

TEST_CASE("manifest branches run through build-an and hrf") {
  testsupport::TempDir dir("pipe");
  testsupport::ToyDump toy;
  toy.layers = 2;
  toy.heads = 2;
  toy.dim = 8;
  toy.seq_len = std::vector<std::size_t>(40, 3);
  const auto manifest = testsupport::write_toy_dump(dir / "dump", toy);

  std::mt19937_64 rng(81);
  json doc = {{"output_dir", "run"},
              {"seed", 4},
              {"hyperparameters", {{"k", 4}, {"epochs", 2}, {"batch", 16}}},
              {"branches", json::array({{{"name", "toy"}, {"manifest", "dump/manifest.json"}}})},
              {"fmri", json::array()},
              {"parcellation", "parc.csv"}};
  for (int s = 0; s < 3; ++s) {
    const auto name = "sub" + std::to_string(s) + ".antx";
    neurocode::tensor_io::write_matrix(dir / name, testsupport::gaussian(40, 20, rng));
    doc["fmri"].push_back(name);
  }
  std::ofstream parc(dir / "parc.csv");
  parc << "voxel,region\n";
  for (int v = 0; v < 20; ++v) parc << v << ',' << v / 5 << '\n';
  parc.close();
  std::ofstream(dir / "config.json") << doc.dump(2);

  const auto cfg = np::load_config(dir / "config.json");
  CHECK(cfg.run_hrf);
  const auto summary = np::run_pipeline(cfg);
  CHECK(ran(summary, "build-an"));
  CHECK(ran(summary, "hrf"));
  CHECK(neurocode::tensor_io::read_matrix(dir / "run" / "branches" / "toy" / "hrf" / "X.antx").cols() == 32);
  CHECK(fs::exists(dir / "run" / "report" / "region_counts.csv"));
}

TEST_CASE("sha256 known vectors") {
  CHECK(np::sha256_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(np::sha256_text("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("CLI exit status reflects failure") {
  testsupport::TempDir dir("pipe");
  std::ofstream(dir / "bad.json") << R"({"output_dir": "run", "hyperparameters": {"lambda_fmri": -1},
                                          "synthetic": {"t": 40, "n_an": 50}})";
  const std::string cli = NEUROCODE_CLI_PATH;
  const int bad = std::system((cli + " run --config " + (dir / "bad.json").string() + " > /dev/null 2>&1").c_str());
  CHECK(bad != 0);

  std::ofstream(dir / "good.json") << R"({"output_dir": "run", "seed": 1,
      "hyperparameters": {"k": 4, "epochs": 2, "batch": 16},
      "synthetic": {"t": 40, "n_an": 60, "k_true": 4, "sparsity": 2, "n_subjects": 3, "n_voxels": 40, "n_regions": 2}})";
  const int good = std::system((cli + " run --config " + (dir / "good.json").string() + " > /dev/null 2>&1").c_str());
  CHECK(good == 0);
}
