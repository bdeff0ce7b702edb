#include "neurocode/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "neurocode/an_construct.hpp"
#include "neurocode/analysis.hpp"
#include "neurocode/column_stats.hpp"
#include "neurocode/encoder.hpp"
#include "neurocode/error.hpp"
#include "neurocode/hrf.hpp"
#include "neurocode/table_io.hpp"
#include "neurocode/tensor_io.hpp"

namespace neurocode::pipeline {

using nlohmann::json;

namespace {

// ---- hashing ------------------------------------------------------------

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorKind::io, "cannot initialise SHA-256");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size) { EVP_DigestUpdate(ctx_, data, size); }

  std::string hex() {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, digest, &len);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

// ---- small file helpers -------------------------------------------------

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, path.string() + ": " + e.what());
  }
}

std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string subject_id_of(const fs::path& p) { return p.stem().string(); }

json nan_to_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

std::string dice_mode_name(stat_map::DiceMode mode) {
  return mode == stat_map::DiceMode::whole ? "whole" : "region";
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m, const std::string& row_label,
                      const std::string& col_prefix) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << row_label;
  for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << col_prefix << c;
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << table_io::format_double(m(r, c));
    out << '\n';
  }
}

std::vector<stat_map::BNMap> read_bn_maps(const fs::path& stats_dir) {
  const auto files = files_with_suffix(stats_dir / "bn", ".csv");
  if (files.empty() && !fs::is_directory(stats_dir / "bn")) {
    throw Error(ErrorKind::missing_file, "no BN maps under " + (stats_dir / "bn").string());
  }
  std::vector<stat_map::BNMap> maps;
  for (std::size_t i = 0; i < files.size(); ++i) maps.push_back(table_io::read_bn_map(files[i], i));
  return maps;
}

an::ANIndex index_or_flat(const fs::path& index_csv, std::size_t columns) {
  if (!index_csv.empty() && fs::exists(index_csv)) return table_io::read_an_index(index_csv);
  return an::build_an_index(1, 1, columns);
}

double positive_or_throw(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorKind::invalid_argument, std::string("hyperparameter ") + name + " must be positive");
  }
  return v;
}

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && s != "." && s != "..";
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::missing_file, "cannot hash " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string sha256_text(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex();
}

// ---- config ---------------------------------------------------------------

void PipelineConfig::validate() const {
  if (hp.k < 1) throw Error(ErrorKind::invalid_argument, "hyperparameter k must be positive");
  positive_or_throw(hp.lambda_an, "lambda_an");
  positive_or_throw(hp.lambda_fmri, "lambda_fmri");
  positive_or_throw(hp.tr, "tr");
  positive_or_throw(hp.hrf_duration, "hrf_duration");
  positive_or_throw(hp.q, "q");
  positive_or_throw(hp.dice, "dice");
  if (hp.q > 1.0) throw Error(ErrorKind::invalid_argument, "hyperparameter q must be <= 1");
  if (hp.dice > 1.0) throw Error(ErrorKind::invalid_argument, "hyperparameter dice must be <= 1");
  if (hp.epochs < 1 || hp.batch < 1) throw Error(ErrorKind::invalid_argument, "epochs and batch must be positive");
  if (output_dir.empty()) throw Error(ErrorKind::invalid_argument, "config needs an output_dir");

  if (synthetic) {
    synth::SynthSpec copy = *synthetic;
    copy.validate_and_complete();
    if (!branches.empty()) throw Error(ErrorKind::invalid_argument, "synthetic configs cannot add other branches");
    return;
  }
  if (branches.empty()) throw Error(ErrorKind::invalid_argument, "config lists no model branches");
  for (const auto& b : branches) {
    if (!safe_name(b.name)) throw Error(ErrorKind::invalid_argument, "bad branch name '" + b.name + "'");
    if (b.manifest.empty() == b.activations.empty()) {
      throw Error(ErrorKind::invalid_argument, "branch " + b.name + " needs exactly one of manifest/activations");
    }
    for (const auto& p : {b.manifest, b.activations, b.index}) {
      if (!p.empty() && !fs::exists(p)) throw Error(ErrorKind::missing_file, "missing input " + p.string());
    }
  }
  if (fmri.size() < 2) throw Error(ErrorKind::invalid_argument, "config needs at least 2 subject fMRI files");
  for (const auto& p : fmri) {
    if (!fs::exists(p)) throw Error(ErrorKind::missing_file, "missing input " + p.string());
  }
  if (parcellation.empty() || !fs::exists(parcellation)) {
    throw Error(ErrorKind::missing_file, "missing parcellation " + parcellation.string());
  }
}

json PipelineConfig::to_json() const {
  json branches_doc = json::array();
  for (const auto& b : branches) {
    branches_doc.push_back({{"name", b.name},
                            {"manifest", b.manifest.generic_string()},
                            {"activations", b.activations.generic_string()},
                            {"index", b.index.generic_string()}});
  }
  json fmri_doc = json::array();
  for (const auto& p : fmri) fmri_doc.push_back(p.generic_string());
  json doc = {
      {"branches", branches_doc},
      {"fmri", fmri_doc},
      {"parcellation", parcellation.generic_string()},
      {"seed", seed},
      {"hyperparameters",
       {{"k", hp.k},
        {"lambda_an", hp.lambda_an},
        {"lambda_fmri", hp.lambda_fmri},
        {"tr", hp.tr},
        {"hrf_duration", hp.hrf_duration},
        {"q", hp.q},
        {"dice", hp.dice},
        {"epochs", hp.epochs},
        {"batch", hp.batch}}},
      {"stages", {{"hrf", run_hrf}, {"analyze", run_analyze}, {"verify_an", verify_an}}},
      {"dice_mode", dice_mode_name(dice_mode)},
  };
  if (synthetic) doc["synthetic"] = synth::to_json(*synthetic);
  return doc;
}

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
  auto resolve = [&](const std::string& s) -> fs::path {
    if (s.empty()) return {};
    const fs::path p(s);
    return p.is_absolute() ? p : base_dir / p;
  };
  PipelineConfig cfg;
  try {
    cfg.output_dir = resolve(doc.value("output_dir", std::string("run")));
    cfg.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("hyperparameters")) {
      const auto& h = doc["hyperparameters"];
      cfg.hp.k = h.value("k", cfg.hp.k);
      cfg.hp.lambda_an = h.value("lambda_an", cfg.hp.lambda_an);
      cfg.hp.lambda_fmri = h.value("lambda_fmri", cfg.hp.lambda_fmri);
      cfg.hp.tr = h.value("tr", cfg.hp.tr);
      cfg.hp.hrf_duration = h.value("hrf_duration", cfg.hp.hrf_duration);
      cfg.hp.q = h.value("q", cfg.hp.q);
      cfg.hp.dice = h.value("dice", cfg.hp.dice);
      cfg.hp.epochs = h.value("epochs", cfg.hp.epochs);
      cfg.hp.batch = h.value("batch", cfg.hp.batch);
    }
    if (doc.contains("synthetic")) cfg.synthetic = synth::spec_from_json(doc["synthetic"]);
    // Synthetic activations stand in for HRF-convolved responses, so HRF defaults off there.
    cfg.run_hrf = !cfg.synthetic.has_value();
    if (doc.contains("stages")) {
      const auto& s = doc["stages"];
      cfg.run_hrf = s.value("hrf", cfg.run_hrf);
      cfg.run_analyze = s.value("analyze", cfg.run_analyze);
      cfg.verify_an = s.value("verify_an", cfg.verify_an);
    }
    const auto mode = doc.value("dice_mode", std::string("whole"));
    if (mode == "whole") {
      cfg.dice_mode = stat_map::DiceMode::whole;
    } else if (mode == "region") {
      cfg.dice_mode = stat_map::DiceMode::region;
    } else {
      throw Error(ErrorKind::invalid_argument, "dice_mode must be 'whole' or 'region'");
    }
    for (const auto& b : doc.value("branches", json::array())) {
      cfg.branches.push_back({b.at("name").get<std::string>(), resolve(b.value("manifest", std::string())),
                              resolve(b.value("activations", std::string())),
                              resolve(b.value("index", std::string()))});
    }
    for (const auto& p : doc.value("fmri", json::array())) cfg.fmri.push_back(resolve(p.get<std::string>()));
    cfg.parcellation = resolve(doc.value("parcellation", std::string()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json(read_json(path), fs::absolute(path).parent_path());
}

// ---- stage bodies -------------------------------------------------------

void stage_synth(const synth::SynthSpec& spec_in, const fs::path& out_dir) {
  synth::SynthSpec spec = spec_in;
  spec.validate_and_complete();
  fs::create_directories(out_dir / "fmri");
  auto [x, truth] = synth::generate_synthetic_an(spec);
  const auto fmri = synth::generate_synthetic_fmri(truth, spec);
  tensor_io::write_matrix(out_dir / "X.antx", x);
  tensor_io::write_matrix(out_dir / "D_true.antx", truth.d_true);
  tensor_io::write_matrix(out_dir / "A_true.antx", truth.a_true);
  table_io::write_an_index(out_dir / "index.csv", truth.index);
  table_io::write_parcellation(out_dir / "parcellation.csv", fmri.parcellation);
  for (const auto& subject : fmri.subjects) {
    tensor_io::write_matrix(out_dir / "fmri" / (subject.subject_id + ".antx"), subject.values);
  }
  write_json(out_dir / "truth.json", {{"spec", synth::to_json(spec)},
                                      {"atom_region", truth.atom_region},
                                      {"atom_sign", truth.atom_sign},
                                      {"gains", truth.gains}});
}

void stage_build_an(const fs::path& manifest_path, const fs::path& out_dir, bool verify) {
  fs::create_directories(out_dir);
  const auto manifest = tensor_io::load_manifest(manifest_path);
  an::BuildOptions options;
  options.verify_with_brute = verify;
  auto [x, index] = an::build_activation_matrix(manifest, options);
  tensor_io::write_matrix(out_dir / "X.antx", x.values);
  table_io::write_an_index(out_dir / "index.csv", index);
}

void stage_hrf(const fs::path& x_in, const fs::path& out_dir, double tr, double duration) {
  fs::create_directories(out_dir);
  const auto kernel = hrf::canonical_hrf(tr, duration);
  const auto x = tensor_io::read_matrix(x_in);
  tensor_io::write_matrix(out_dir / "X.antx", hrf::convolve_hrf(x, kernel));
}

void stage_learn_dict(const fs::path& x_in, const fs::path& out_dir, const sdl::LearnOptions& options) {
  fs::create_directories(out_dir);
  const auto x = tensor_io::read_matrix(x_in);
  const auto fit = sdl::learn_from_activations(x, options);
  tensor_io::write_matrix(out_dir / "D.antx", fit.dictionary.atoms);
  tensor_io::write_matrix(out_dir / "A.antx", fit.codes.values);
  table_io::write_r2(out_dir / "an_r2.csv", fit.report.per_column_r2, "column");
  write_json(out_dir / "fit_report.json",
             {{"k", options.k},
              {"lambda_an", options.lambda},
              {"epochs", options.epochs},
              {"batch", options.batch_size},
              {"seed", fit.report.seed},
              {"initial_objective", fit.report.initial_objective},
              {"objective_trace", fit.report.objective_trace},
              {"fallback_epochs", fit.report.fallback_epochs},
              {"reinitialized_atoms", fit.report.reinitialized_atoms},
              {"code_sparsity", fit.codes.sparsity()},
              {"median_r2", nan_to_null(column_stats::median_of_defined(fit.report.per_column_r2))}});
}

void stage_encode(const fs::path& dictionary, const std::vector<fs::path>& fmri, const fs::path& out_dir,
                  double lambda_fmri) {
  fs::create_directories(out_dir);
  const auto d = sdl::Dictionary::from_matrix(tensor_io::read_matrix(dictionary));
  json subjects = json::array();
  for (const auto& path : fmri) {
    const encoder::VoxelMatrix s{tensor_io::read_matrix(path), subject_id_of(path)};
    const auto result = encoder::encode_voxels(s, d, lambda_fmri);
    if (result.kkt_failures > 0) {
      std::cerr << "warning: " << result.kkt_failures << " of " << result.kkt_checked
                << " KKT certificates failed for " << s.subject_id << '\n';
    }
    tensor_io::write_matrix(out_dir / (s.subject_id + "_coef.antx"), result.coefficients);
    table_io::write_r2(out_dir / (s.subject_id + "_r2.csv"), result.per_voxel_r2);
    subjects.push_back({{"subject", s.subject_id},
                        {"median_r2", nan_to_null(column_stats::median_of_defined(result.per_voxel_r2))},
                        {"kkt_checked", result.kkt_checked},
                        {"kkt_failures", result.kkt_failures},
                        {"kkt_max_violation", result.kkt_max_violation}});
  }
  write_json(out_dir / "summary.json", {{"lambda_fmri", lambda_fmri}, {"subjects", subjects}});
}

void stage_stats(const fs::path& coeff_dir, const fs::path& out_dir, double q) {
  const auto files = files_with_suffix(coeff_dir, "_coef.antx");
  std::vector<Eigen::MatrixXd> stack;
  for (const auto& f : files) stack.push_back(tensor_io::read_matrix(f));
  const auto stat = stat_map::group_ttest(stack);
  const auto maps = stat_map::threshold_map(stat, q);
  fs::create_directories(out_dir / "bn");
  tensor_io::write_matrix(out_dir / "t.antx", stat.t_stats);
  tensor_io::write_matrix(out_dir / "p.antx", stat.p_values);
  tensor_io::write_matrix(out_dir / "q.antx", stat.q_values);
  json atoms = json::array();
  for (const auto& map : maps) {
    std::ostringstream name;
    name << "atom_" << std::setw(4) << std::setfill('0') << map.atom_id << ".csv";
    table_io::write_bn_map(out_dir / "bn" / name.str(), map);
    const auto pos = std::count(map.signs.begin(), map.signs.end(), std::int8_t{1});
    const auto neg = std::count(map.signs.begin(), map.signs.end(), std::int8_t{-1});
    atoms.push_back({{"atom", map.atom_id}, {"positive", pos}, {"negative", neg}});
  }
  write_json(out_dir / "summary.json", {{"n_subjects", stack.size()}, {"q", q}, {"atoms", atoms}});
}

void stage_map(const std::vector<std::pair<std::string, fs::path>>& branch_stats, const fs::path& parcellation_csv,
               const fs::path& out_csv, double dice_threshold, stat_map::DiceMode mode) {
  const auto parcellation = table_io::read_parcellation(parcellation_csv);
  std::vector<std::vector<std::size_t>> columns;
  for (const auto& [name, dir] : branch_stats) {
    const auto maps = read_bn_maps(dir);
    columns.push_back(stat_map::count_parcel_activations(maps, parcellation, dice_threshold, mode));
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  std::ofstream out(out_csv);
  if (!out) throw Error(ErrorKind::io, "cannot write " + out_csv.string());
  out << "region,name";
  for (const auto& b : branch_stats) out << ',' << b.first;
  out << '\n';
  for (std::size_t r = 0; r < parcellation.regions(); ++r) {
    out << r << ',' << parcellation.region_names[r];
    for (const auto& c : columns) out << ',' << c[r];
    out << '\n';
  }
}

void stage_analyze_redundancy(const fs::path& dict_dir, const fs::path& index_csv, const fs::path& stats_dir,
                              const fs::path& parcellation_csv, const fs::path& out_dir, double dice_threshold,
                              stat_map::DiceMode mode) {
  fs::create_directories(out_dir);
  const auto d = sdl::Dictionary::from_matrix(tensor_io::read_matrix(dict_dir / "D.antx"));
  const sdl::CodeMatrix codes{tensor_io::read_matrix(dict_dir / "A.antx")};
  const auto index = index_or_flat(index_csv, static_cast<std::size_t>(codes.values.cols()));
  const auto corr = analysis::atom_correlation_matrix(d);
  write_matrix_csv(out_dir / "atom_correlation.csv", corr.values, "atom", "atom_");

  const auto profiles = analysis::layer_profiles(codes, index);
  Eigen::MatrixXd profile_matrix(static_cast<Eigen::Index>(profiles.size()), static_cast<Eigen::Index>(index.num_layers));
  for (std::size_t a = 0; a < profiles.size(); ++a) {
    for (std::size_t l = 0; l < index.num_layers; ++l) {
      profile_matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(l)) =
          profiles[a].empty ? std::numeric_limits<double>::quiet_NaN() : profiles[a].weights[l];
    }
  }
  write_matrix_csv(out_dir / "layer_profiles.csv", profile_matrix, "atom", "layer_");

  const auto parcellation = table_io::read_parcellation(parcellation_csv);
  const auto maps = read_bn_maps(stats_dir);
  json groups = json::array();
  for (const auto& g : analysis::spatial_overlap(maps, parcellation, dice_threshold, mode)) {
    groups.push_back({{"region", g.region},
                      {"name", parcellation.region_names[g.region]},
                      {"atoms", g.atoms},
                      {"redundant", g.redundant()}});
  }
  write_json(out_dir / "redundancy.json", {{"zero_variance_atoms", corr.zero_variance}, {"region_groups", groups}});
}

void stage_analyze_polarity(const fs::path& dict_dir, const fs::path& index_csv, const fs::path& stats_dir,
                            const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const sdl::CodeMatrix codes{tensor_io::read_matrix(dict_dir / "A.antx")};
  const auto index = index_or_flat(index_csv, static_cast<std::size_t>(codes.values.cols()));
  const auto profiles = analysis::layer_profiles(codes, index);
  const auto maps = read_bn_maps(stats_dir);
  json pairs = json::array();
  for (const auto& p : analysis::polarity_pairs(maps, profiles)) {
    pairs.push_back({{"atom_a", p.atom_a},
                     {"atom_b", p.atom_b},
                     {"map_correlation", p.map_correlation},
                     {"profile_correlation", p.profile_correlation},
                     {"map_relation", analysis::to_string(p.map_relation)},
                     {"layer_relation", analysis::to_string(p.layer_relation)}});
  }
  write_json(out_dir / "polarity.json", {{"pairs", pairs}});
}

// ---- orchestration ------------------------------------------------------

namespace {

struct StageDef {
  std::string name;
  std::string branch;
  fs::path dir;
  std::vector<fs::path> inputs;
  json settings;
  std::function<void()> body;
};

std::string display_path(const fs::path& p, const fs::path& run_dir) {
  const auto rel = fs::proximate(p, run_dir);
  const auto s = rel.generic_string();
  return s.rfind("..", 0) == 0 ? fs::absolute(p).generic_string() : s;
}

class Runner {
 public:
  Runner(fs::path run_dir, std::string config_hash, std::uint64_t seed)
      : run_dir_(std::move(run_dir)), config_hash_(std::move(config_hash)), seed_(seed) {}

  void run(const StageDef& stage, RunSummary& summary) {
    const std::string label = stage.branch.empty() ? stage.name : stage.name + " [" + stage.branch + "]";
    try {
      json inputs = json::object();
      for (const auto& p : stage.inputs) inputs[display_path(p, run_dir_)] = sha256_file(p);
      const json key_doc = {{"stage", stage.name}, {"branch", stage.branch}, {"settings", stage.settings}, {"inputs", inputs}};
      const std::string key = sha256_text(key_doc.dump());
      const fs::path record = provenance_path(stage);

      if (is_cached(record, key, stage.dir)) {
        std::cerr << "stage " << label << ": cached\n";
        summary.stages.push_back({stage.name, stage.branch, true});
        return;
      }
      std::cerr << "stage " << label << ": running\n";
      fs::remove_all(stage.dir);
      fs::create_directories(stage.dir);
      stage.body();

      json outputs = json::object();
      for (const auto& f : files_under(stage.dir)) outputs[display_path(f, run_dir_)] = sha256_file(f);
      fs::create_directories(record.parent_path());
      write_json(record, {{"stage", stage.name},
                          {"branch", stage.branch},
                          {"key", key},
                          {"config_hash", config_hash_},
                          {"seed", seed_},
                          {"settings", stage.settings},
                          {"inputs", inputs},
                          {"outputs", outputs}});
      summary.stages.push_back({stage.name, stage.branch, false});
    } catch (const std::exception& e) {
      throw Error(ErrorKind::stage_failed, "stage '" + stage.name + "'" +
                                               (stage.branch.empty() ? "" : " (branch " + stage.branch + ")") +
                                               " failed: " + e.what());
    }
  }

 private:
  fs::path provenance_path(const StageDef& stage) const {
    return run_dir_ / "provenance" / ((stage.branch.empty() ? "global" : stage.branch) + "." + stage.name + ".json");
  }

  bool is_cached(const fs::path& record, const std::string& key, const fs::path& dir) const {
    if (!fs::exists(record)) return false;
    json doc;
    try {
      doc = read_json(record);
    } catch (const Error&) {
      return false;
    }
    if (doc.value("key", std::string()) != key || !doc.contains("outputs")) return false;
    const auto present = files_under(dir);
    if (present.size() != doc["outputs"].size()) return false;
    for (const auto& f : present) {
      const auto name = display_path(f, run_dir_);
      if (!doc["outputs"].contains(name) || doc["outputs"][name] != sha256_file(f)) return false;
    }
    return true;
  }

  fs::path run_dir_;
  std::string config_hash_;
  std::uint64_t seed_;
};

}  // namespace

RunSummary run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const fs::path run_dir = cfg.output_dir;
  fs::create_directories(run_dir);
  const json config_doc = cfg.to_json();
  const std::string config_hash = sha256_text(config_doc.dump());

  std::vector<BranchConfig> branches = cfg.branches;
  std::vector<fs::path> fmri = cfg.fmri;
  fs::path parcellation = cfg.parcellation;

  RunSummary summary{run_dir, {}};
  Runner runner(run_dir, config_hash, cfg.seed);

  if (cfg.synthetic) {
    const fs::path dir = run_dir / "synth";
    runner.run({"synth", "", dir, {}, synth::to_json(*cfg.synthetic), [&] { stage_synth(*cfg.synthetic, dir); }},
               summary);
    branches = {{"synthetic", {}, dir / "X.antx", dir / "index.csv"}};
    fmri = files_with_suffix(dir / "fmri", ".antx");
    parcellation = dir / "parcellation.csv";
  }

  std::vector<std::string> branch_names;
  for (const auto& b : branches) {
    branch_names.push_back(b.name);
    const fs::path bdir = run_dir / "branches" / b.name;
    fs::path x_path = b.activations;
    fs::path index_path = b.index;

    if (!b.manifest.empty()) {
      std::vector<fs::path> inputs = {b.manifest};
      const auto manifest = tensor_io::load_manifest(b.manifest);
      for (const auto& e : manifest.entries) {
        inputs.push_back(e.q_path);
        inputs.push_back(e.k_path);
      }
      const fs::path dir = bdir / "an";
      runner.run({"build-an", b.name, dir, inputs, {{"verify", cfg.verify_an}},
                  [&] { stage_build_an(b.manifest, dir, cfg.verify_an); }},
                 summary);
      x_path = dir / "X.antx";
      index_path = dir / "index.csv";
    }

    if (cfg.run_hrf) {
      const fs::path dir = bdir / "hrf";
      const fs::path in = x_path;
      runner.run({"hrf", b.name, dir, {in}, {{"tr", cfg.hp.tr}, {"duration", cfg.hp.hrf_duration}},
                  [&] { stage_hrf(in, dir, cfg.hp.tr, cfg.hp.hrf_duration); }},
                 summary);
      x_path = dir / "X.antx";
    }

    const fs::path dict_dir = bdir / "dict";
    sdl::LearnOptions learn;
    learn.k = cfg.hp.k;
    learn.lambda = cfg.hp.lambda_an;
    learn.epochs = cfg.hp.epochs;
    learn.batch_size = cfg.hp.batch;
    learn.seed = cfg.seed;
    runner.run({"learn-dict", b.name, dict_dir, {x_path},
                {{"k", learn.k}, {"lambda_an", learn.lambda}, {"epochs", learn.epochs}, {"batch", learn.batch_size},
                 {"seed", learn.seed}},
                [&] { stage_learn_dict(x_path, dict_dir, learn); }},
               summary);

    const fs::path encode_dir = bdir / "encode";
    std::vector<fs::path> encode_inputs = {dict_dir / "D.antx"};
    encode_inputs.insert(encode_inputs.end(), fmri.begin(), fmri.end());
    runner.run({"encode", b.name, encode_dir, encode_inputs, {{"lambda_fmri", cfg.hp.lambda_fmri}},
                [&] { stage_encode(dict_dir / "D.antx", fmri, encode_dir, cfg.hp.lambda_fmri); }},
               summary);

    const fs::path stats_dir = bdir / "stats";
    runner.run({"stats", b.name, stats_dir, files_with_suffix(encode_dir, "_coef.antx"), {{"q", cfg.hp.q}},
                [&] { stage_stats(encode_dir, stats_dir, cfg.hp.q); }},
               summary);

    std::vector<fs::path> map_inputs = files_under(stats_dir / "bn");
    map_inputs.push_back(parcellation);
    const fs::path map_dir = bdir / "map";
    runner.run({"map", b.name, map_dir, map_inputs, {{"dice", cfg.hp.dice}, {"dice_mode", dice_mode_name(cfg.dice_mode)}},
                [&] {
                  stage_map({{b.name, stats_dir}}, parcellation, map_dir / "region_counts.csv", cfg.hp.dice,
                            cfg.dice_mode);
                }},
               summary);

    if (cfg.run_analyze) {
      std::vector<fs::path> inputs = map_inputs;
      inputs.push_back(dict_dir / "D.antx");
      inputs.push_back(dict_dir / "A.antx");
      if (!index_path.empty()) inputs.push_back(index_path);
      const fs::path dir = bdir / "analyze";
      runner.run({"analyze", b.name, dir, inputs, {{"dice", cfg.hp.dice}, {"dice_mode", dice_mode_name(cfg.dice_mode)}},
                  [&] {
                    stage_analyze_redundancy(dict_dir, index_path, stats_dir, parcellation, dir, cfg.hp.dice,
                                             cfg.dice_mode);
                    stage_analyze_polarity(dict_dir, index_path, stats_dir, dir);
                  }},
                 summary);
    }
  }

  write_json(run_dir / "run.json",
             {{"branches", branch_names}, {"config_hash", config_hash}, {"seed", cfg.seed}, {"analyze", cfg.run_analyze}});

  std::vector<fs::path> report_inputs = {run_dir / "run.json"};
  for (const auto& name : branch_names) {
    for (const char* stage : {"dict", "encode", "map", "analyze"}) {
      const auto files = files_under(run_dir / "branches" / name / stage);
      report_inputs.insert(report_inputs.end(), files.begin(), files.end());
    }
  }
  const fs::path report_dir = run_dir / "report";
  runner.run({"report", "", report_dir, report_inputs, json::object(), [&] { report(run_dir, report_dir); }}, summary);
  return summary;
}

// ---- report ---------------------------------------------------------------

namespace {

std::vector<double> read_r2_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_file, "cannot read " + path.string());
  std::vector<double> values;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string v = line.substr(comma + 1);
    values.push_back(v == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(v));
  }
  return values;
}

void require_stage(const fs::path& artifact, const std::string& stage, const std::string& branch) {
  if (!fs::exists(artifact)) {
    throw Error(ErrorKind::missing_file, "run directory is missing output of stage '" + stage + "' for branch " +
                                             branch + " (" + artifact.filename().string() + ")");
  }
}

// 20 bins on [0, 1] plus one underflow bin for negative R^2.
std::vector<std::size_t> histogram(const std::vector<double>& values) {
  std::vector<std::size_t> bins(21, 0);
  for (double v : values) {
    if (std::isnan(v)) continue;
    if (v < 0.0) {
      ++bins[0];
      continue;
    }
    const auto b = std::min<std::size_t>(19, static_cast<std::size_t>(v * 20.0));
    ++bins[b + 1];
  }
  return bins;
}

}  // namespace

void report(const fs::path& run_dir, const fs::path& bundle_dir) {
  const json run = read_json(run_dir / "run.json");
  const auto branches = run.at("branches").get<std::vector<std::string>>();
  const bool analyze = run.value("analyze", true);

  for (const auto& b : branches) {
    const fs::path bdir = run_dir / "branches" / b;
    require_stage(bdir / "dict" / "an_r2.csv", "learn-dict", b);
    require_stage(bdir / "encode" / "summary.json", "encode", b);
    require_stage(bdir / "stats" / "summary.json", "stats", b);
    require_stage(bdir / "map" / "region_counts.csv", "map", b);
    if (analyze) {
      require_stage(bdir / "analyze" / "redundancy.json", "analyze", b);
      require_stage(bdir / "analyze" / "polarity.json", "analyze", b);
    }
  }
  fs::create_directories(bundle_dir);

  // Family 1: R^2 distributions per branch.
  std::ofstream hist(bundle_dir / "r2_histograms.csv");
  hist << "branch,kind,bin_lo,bin_hi,count\n";
  std::ofstream subj(bundle_dir / "r2_subjects.csv");
  subj << "branch,subject,median_r2\n";
  std::map<std::string, std::vector<double>> subject_medians;
  for (const auto& b : branches) {
    const fs::path bdir = run_dir / "branches" / b;
    std::vector<double> bn;
    const json summary = read_json(bdir / "encode" / "summary.json");
    for (const auto& s : summary.at("subjects")) {
      const auto id = s.at("subject").get<std::string>();
      const auto r2 = read_r2_csv(bdir / "encode" / (id + "_r2.csv"));
      bn.insert(bn.end(), r2.begin(), r2.end());
      const double med = column_stats::median_of_defined(r2);
      subj << b << ',' << id << ',' << table_io::format_double(med) << '\n';
      if (!std::isnan(med)) subject_medians[b].push_back(med);
    }
    const std::pair<const char*, std::vector<double>> kinds[] = {{"an", read_r2_csv(bdir / "dict" / "an_r2.csv")},
                                                                 {"bn", bn}};
    for (const auto& [kind, values] : kinds) {
      const auto bins = histogram(values);
      hist << b << ',' << kind << ",-inf,0," << bins[0] << '\n';
      for (std::size_t i = 0; i < 20; ++i) {
        hist << b << ',' << kind << ',' << table_io::format_double(i / 20.0) << ','
             << table_io::format_double((i + 1) / 20.0) << ',' << bins[i + 1] << '\n';
      }
    }
  }
  json comparisons = json::array();
  for (std::size_t i = 0; i < branches.size(); ++i) {
    for (std::size_t j = i + 1; j < branches.size(); ++j) {
      const auto& a = subject_medians[branches[i]];
      const auto& c = subject_medians[branches[j]];
      if (a.size() < 2 || c.size() < 2) continue;
      const auto w = encoder::compare_r2_distributions(a, c);
      comparisons.push_back({{"branch_a", branches[i]},
                             {"branch_b", branches[j]},
                             {"t_statistic", nan_to_null(w.t_statistic)},
                             {"p_value", w.p_value},
                             {"df", w.degrees_of_freedom}});
    }
  }
  write_json(bundle_dir / "r2_comparison.json", {{"summary", "per-subject median voxel R^2, Welch t-test"},
                                                 {"comparisons", comparisons}});

  // Family 2: region x branch BN counts.
  std::vector<std::vector<std::string>> count_rows;
  for (std::size_t bi = 0; bi < branches.size(); ++bi) {
    std::ifstream in(run_dir / "branches" / branches[bi] / "map" / "region_counts.csv");
    std::string line;
    std::getline(in, line);
    std::size_t r = 0;
    while (std::getline(in, line)) {
      const auto last = line.rfind(',');
      if (bi == 0) count_rows.push_back({line.substr(0, last)});
      if (r < count_rows.size()) count_rows[r].push_back(line.substr(last + 1));
      ++r;
    }
  }
  std::ofstream counts(bundle_dir / "region_counts.csv");
  counts << "region,name";
  for (const auto& b : branches) counts << ',' << b;
  counts << '\n';
  for (const auto& row : count_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) counts << (i ? "," : "") << row[i];
    counts << '\n';
  }

  if (!analyze) return;
  // Families 3 and 4: redundancy matrices and pair/group reports.
  fs::create_directories(bundle_dir / "redundancy");
  json pairs = json::object();
  for (const auto& b : branches) {
    const fs::path adir = run_dir / "branches" / b / "analyze";
    fs::copy_file(adir / "atom_correlation.csv", bundle_dir / "redundancy" / (b + "_atom_correlation.csv"),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(adir / "layer_profiles.csv", bundle_dir / "redundancy" / (b + "_layer_profiles.csv"),
                  fs::copy_options::overwrite_existing);
    pairs[b] = {{"redundancy", read_json(adir / "redundancy.json")}, {"polarity", read_json(adir / "polarity.json")}};
  }
  write_json(bundle_dir / "pairs.json", pairs);
}

}  // namespace neurocode::pipeline
