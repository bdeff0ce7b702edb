// neurocode command-line driver. Each subcommand wraps one pipeline stage;
// `run` chains them from a JSON config and `report` bundles a run directory.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "neurocode/error.hpp"
#include "neurocode/parallel.hpp"
#include "neurocode/pipeline.hpp"

namespace fs = std::filesystem;
namespace np = neurocode::pipeline;

namespace {

neurocode::stat_map::DiceMode parse_mode(const std::string& s) {
  return s == "region" ? neurocode::stat_map::DiceMode::region : neurocode::stat_map::DiceMode::whole;
}

}  // namespace

int main(int argc, char** argv) {
  neurocode::configure_threads_from_env();

  CLI::App app{"neurocode: attention-neuron dictionaries mapped onto fMRI"};
  app.require_subcommand(1);

  // build-an
  std::string manifest, out;
  bool verify = false;
  auto* build = app.add_subcommand("build-an", "Build the AN activation matrix from a Q/K dump manifest");
  build->add_option("--manifest", manifest, "QK manifest JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--out", out, "Output directory")->required();
  build->add_flag("--verify", verify, "Cross-check every activation against the brute-force product");

  // hrf
  std::string x_in;
  double tr = 1.0, hrf_duration = 32.0;
  auto* hrf = app.add_subcommand("hrf", "Convolve activation columns with the canonical HRF");
  hrf->add_option("--in", x_in, "Input t x n ANTX matrix")->required()->check(CLI::ExistingFile);
  hrf->add_option("--out", out, "Output directory")->required();
  hrf->add_option("--tr", tr, "Repetition time in seconds")->capture_default_str();
  hrf->add_option("--hrf-duration", hrf_duration, "Kernel length in seconds")->capture_default_str();

  // learn-dict
  neurocode::sdl::LearnOptions learn;
  auto* learn_cmd = app.add_subcommand("learn-dict", "Learn a sparse dictionary over AN activations");
  learn_cmd->add_option("--in", x_in, "Input t x n ANTX matrix")->required()->check(CLI::ExistingFile);
  learn_cmd->add_option("--out", out, "Output directory")->required();
  learn_cmd->add_option("--k", learn.k, "Number of atoms")->capture_default_str()->check(CLI::PositiveNumber);
  learn_cmd->add_option("--lambda-an", learn.lambda, "Sparsity penalty")->capture_default_str()->check(CLI::PositiveNumber);
  learn_cmd->add_option("--epochs", learn.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  learn_cmd->add_option("--batch", learn.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  learn_cmd->add_option("--seed", learn.seed)->capture_default_str();

  // encode
  std::string dict;
  std::vector<std::string> fmri;
  double lambda_fmri = 0.2;
  auto* encode = app.add_subcommand("encode", "Regress voxel responses on dictionary atoms");
  encode->add_option("--dict", dict, "Dictionary D.antx")->required()->check(CLI::ExistingFile);
  encode->add_option("--fmri", fmri, "Subject t x N ANTX matrices")->required()->check(CLI::ExistingFile);
  encode->add_option("--out", out, "Output directory")->required();
  encode->add_option("--lambda-fmri", lambda_fmri)->capture_default_str()->check(CLI::PositiveNumber);

  // stats
  std::string coeff_dir;
  double q = 0.05;
  auto* stats = app.add_subcommand("stats", "Group t-test, FDR and thresholded brain-neuron maps");
  stats->add_option("--coeff-dir", coeff_dir, "Directory of *_coef.antx files")->required()->check(CLI::ExistingDirectory);
  stats->add_option("--out", out, "Output directory")->required();
  stats->add_option("--q", q, "FDR level")->capture_default_str()->check(CLI::Range(0.0, 1.0));

  // map
  std::vector<std::string> stats_dirs;
  std::string parcellation, mode = "whole";
  double dice_threshold = 0.7;
  auto* map = app.add_subcommand("map", "Count significant parcel activations per branch");
  map->add_option("--stats", stats_dirs, "name=stats_dir, repeatable")->required();
  map->add_option("--parcellation", parcellation)->required()->check(CLI::ExistingFile);
  map->add_option("--dice-threshold", dice_threshold)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  map->add_option("--dice-mode", mode)->capture_default_str()->check(CLI::IsMember({"whole", "region"}));
  map->add_option("--out", out, "Output CSV")->required();

  // analyze
  std::string kind, dict_dir, index_csv, stats_dir;
  auto* analyze = app.add_subcommand("analyze", "Redundancy or polarity analysis of a learned dictionary");
  analyze->add_option("kind", kind)->required()->check(CLI::IsMember({"redundancy", "polarity"}));
  analyze->add_option("--dict-dir", dict_dir, "Directory with D.antx and A.antx")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--index", index_csv, "AN index CSV");
  analyze->add_option("--stats-dir", stats_dir)->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--parcellation", parcellation);
  analyze->add_option("--dice-threshold", dice_threshold)->capture_default_str();
  analyze->add_option("--dice-mode", mode)->capture_default_str()->check(CLI::IsMember({"whole", "region"}));
  analyze->add_option("--out", out)->required();

  // synth
  std::string spec_path;
  auto* synth = app.add_subcommand("synth", "Generate planted activations, fMRI subjects and truth");
  synth->add_option("--spec", spec_path, "SynthSpec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out)->required();

  // run / report
  std::string config_path, run_dir;
  auto* run = app.add_subcommand("run", "Run every stage from a JSON config");
  run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  auto* report = app.add_subcommand("report", "Write the tabular report bundle for a run directory");
  report->add_option("--run-dir", run_dir)->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", out, "Bundle directory (default <run-dir>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      np::stage_build_an(manifest, out, verify);
    } else if (*hrf) {
      np::stage_hrf(x_in, out, tr, hrf_duration);
    } else if (*learn_cmd) {
      np::stage_learn_dict(x_in, out, learn);
    } else if (*encode) {
      np::stage_encode(dict, std::vector<fs::path>(fmri.begin(), fmri.end()), out, lambda_fmri);
    } else if (*stats) {
      np::stage_stats(coeff_dir, out, q);
    } else if (*map) {
      std::vector<std::pair<std::string, fs::path>> branches;
      for (const auto& s : stats_dirs) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
          branches.emplace_back(fs::path(s).parent_path().filename().string(), s);
        } else {
          branches.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
      }
      np::stage_map(branches, parcellation, out, dice_threshold, parse_mode(mode));
    } else if (*analyze) {
      if (kind == "redundancy") {
        if (parcellation.empty()) throw neurocode::Error(neurocode::ErrorKind::invalid_argument,
                                                         "analyze redundancy needs --parcellation");
        np::stage_analyze_redundancy(dict_dir, index_csv, stats_dir, parcellation, out, dice_threshold,
                                     parse_mode(mode));
      } else {
        np::stage_analyze_polarity(dict_dir, index_csv, stats_dir, out);
      }
    } else if (*synth) {
      std::ifstream in(spec_path);
      np::stage_synth(neurocode::synth::spec_from_json(nlohmann::json::parse(in)), out);
    } else if (*run) {
      const auto summary = np::run_pipeline(np::load_config(config_path));
      std::size_t cached = 0;
      for (const auto& s : summary.stages) cached += s.cached ? 1 : 0;
      std::cout << summary.stages.size() << " stages, " << cached << " cached; run dir " << summary.run_dir.string()
                << '\n';
    } else if (*report) {
      np::report(run_dir, out.empty() ? fs::path(run_dir) / "report" : fs::path(out));
    }
  } catch (const neurocode::Error& e) {
    std::cerr << "error (" << neurocode::to_string(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
