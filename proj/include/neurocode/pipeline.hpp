#pragma once

// Stage functions shared by the CLI subcommands and `run_pipeline`, plus the
// content-hash cache and the tabular report bundle.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "neurocode/sdl.hpp"
#include "neurocode/stat_map.hpp"
#include "neurocode/synth.hpp"

namespace neurocode::pipeline {

namespace fs = std::filesystem;

struct Hyperparameters {
  std::size_t k = 128;
  double lambda_an = 0.15;
  double lambda_fmri = 0.2;
  double tr = 1.0;
  double hrf_duration = 32.0;
  double q = 0.05;
  double dice = 0.7;
  std::size_t epochs = 20;
  std::size_t batch = 64;
};

struct BranchConfig {
  std::string name;
  fs::path manifest;     // QK dump manifest, or
  fs::path activations;  // a precomputed t x n_AN ANTX matrix
  fs::path index;        // AN index CSV (needed with `activations` for layer profiles)
};

struct PipelineConfig {
  std::vector<BranchConfig> branches;
  std::vector<fs::path> fmri;  // one t x N ANTX matrix per subject
  fs::path parcellation;
  fs::path output_dir;
  Hyperparameters hp;
  std::uint64_t seed = 0;
  bool run_hrf = true;
  bool run_analyze = true;
  bool verify_an = false;
  stat_map::DiceMode dice_mode = stat_map::DiceMode::whole;
  // When set, a "synthetic" branch plus subjects and parcellation are generated.
  std::optional<synth::SynthSpec> synthetic;

  /// Throws Error(invalid_argument) on bad hyperparameters or missing inputs.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Relative paths in the document are resolved against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path);

// ---- stage bodies -------------------------------------------------------

void stage_synth(const synth::SynthSpec& spec, const fs::path& out_dir);
void stage_build_an(const fs::path& manifest, const fs::path& out_dir, bool verify);
void stage_hrf(const fs::path& x_in, const fs::path& out_dir, double tr, double duration);
void stage_learn_dict(const fs::path& x_in, const fs::path& out_dir, const sdl::LearnOptions& options);
void stage_encode(const fs::path& dictionary, const std::vector<fs::path>& fmri, const fs::path& out_dir,
                  double lambda_fmri);
void stage_stats(const fs::path& coeff_dir, const fs::path& out_dir, double q);
/// Region x branch count table; `branch_stats` pairs a column name with a stats directory.
void stage_map(const std::vector<std::pair<std::string, fs::path>>& branch_stats, const fs::path& parcellation,
               const fs::path& out_csv, double dice_threshold, stat_map::DiceMode mode);
void stage_analyze_redundancy(const fs::path& dict_dir, const fs::path& index_csv, const fs::path& stats_dir,
                              const fs::path& parcellation, const fs::path& out_dir, double dice_threshold,
                              stat_map::DiceMode mode);
void stage_analyze_polarity(const fs::path& dict_dir, const fs::path& index_csv, const fs::path& stats_dir,
                            const fs::path& out_dir);

// ---- orchestration ------------------------------------------------------

struct StageOutcome {
  std::string stage;
  std::string branch;  // empty for global stages
  bool cached = false;
};

struct RunSummary {
  fs::path run_dir;
  std::vector<StageOutcome> stages;
};

/// Runs synth? -> build-an -> hrf -> learn-dict -> encode -> stats -> map ->
/// analyze per branch, then report. Stages whose inputs and settings hash to
/// a recorded provenance key are skipped. A failing stage throws
/// Error(stage_failed) naming it; earlier artifacts stay on disk.
RunSummary run_pipeline(const PipelineConfig& config);

/// Writes the report bundle for a completed run directory into `bundle_dir`.
void report(const fs::path& run_dir, const fs::path& bundle_dir);

std::string sha256_file(const fs::path& path);
std::string sha256_text(const std::string& text);

}  // namespace neurocode::pipeline
