#include "glazelab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "glazelab/dataset.hpp"
#include "glazelab/hash.hpp"
#include "glazelab/parallel.hpp"
#include "json.hpp"

#ifndef GLAZELAB_VERSION
#define GLAZELAB_VERSION "0.1.0"
#endif

namespace glazelab::inline GLAZELAB_ABI {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Independent RNG streams under the master seed.
constexpr std::uint64_t kTrainStream = 0xA0;
constexpr std::uint64_t kGenreStream = 0xB0;
constexpr std::uint64_t kCloakStream = 0xC0;
constexpr std::uint64_t kPurifyStream = 0xD0;
constexpr std::uint64_t kCalibrationStream = 0xE0;
constexpr std::uint64_t kGenreContentSeed = 7ULL << 20;

constexpr double kGenreBlurSigma = 1.5;

double tidy(double v) { return std::round(v * 1e6) / 1e6; }

void log(const StageOptions& opts, const std::string& line) {
  if (opts.log) opts.log(line);
}

// ---- files and manifests ----------------------------------------------------

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json config_json(const ExperimentConfig& cfg) { return json::parse(cfg.to_json()); }

struct StageInfo {
  const char* name;     // CLI subcommand that produces it
  const char* manifest; // relative to the workdir
};

constexpr StageInfo kDataStage{"gen-data", "data/manifest.json"};
constexpr StageInfo kModelStage{"train-ae", "model/manifest.json"};
constexpr StageInfo kCloakStage{"cloak", "cloak/manifest.json"};

StageInfo purify_stage(PurifySource s) {
  return s == PurifySource::cloak ? StageInfo{"purify --source cloak", "purify/cloak/manifest.json"}
                                  : StageInfo{"purify --source clean", "purify/clean/manifest.json"};
}

json stage_manifest(const ExperimentConfig& cfg, const std::string& stage) {
  json m;
  m["stage"] = stage;
  m["version"] = version_string();
  m["config"] = config_json(cfg);
  m["inputs"] = json::object();
  m["outputs"] = json::object();
  return m;
}

// Loads a prerequisite manifest and re-hashes every output it lists.
json verify_stage(const ExperimentConfig& cfg, const StageInfo& stage) {
  const fs::path path = cfg.workdir / stage.manifest;
  if (!fs::exists(path)) {
    throw ValidationError("missing " + std::string(stage.manifest) + " in " + cfg.workdir.string() +
                          "; run `glazelab " + stage.name + "` first");
  }
  json m;
  try {
    m = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError(std::string(stage.manifest) + " is not valid JSON: " + e.what());
  }
  if (!m.contains("outputs") || !m.contains("config")) {
    throw ValidationError(std::string(stage.manifest) + " is not a stage manifest");
  }
  const auto seed = m["config"].value("master_seed", std::uint64_t{0});
  if (seed != cfg.master_seed) {
    throw ValidationError(std::string(stage.manifest) + " was produced with master_seed " +
                          std::to_string(seed) + " (current " + std::to_string(cfg.master_seed) +
                          "); rerun `glazelab " + stage.name + "`");
  }
  for (const auto& [rel, hash] : m["outputs"].items()) {
    const fs::path file = cfg.workdir / rel;
    if (!fs::exists(file)) {
      throw ValidationError("missing " + rel + " listed in " + stage.manifest + "; rerun `glazelab " +
                            stage.name + "`");
    }
    if (sha256_file(file) != hash.get<std::string>()) {
      throw ValidationError("hash mismatch for " + rel + " (recorded in " + stage.manifest +
                            "); the file was modified, rerun `glazelab " + stage.name + "`");
    }
  }
  return m;
}

std::string manifest_hash(const ExperimentConfig& cfg, const StageInfo& stage) {
  return sha256_file(cfg.workdir / stage.manifest);
}

std::string save_tracked(const ExperimentConfig& cfg, json& manifest, const std::string& rel,
                         const Image& img) {
  const fs::path path = cfg.workdir / rel;
  fs::create_directories(path.parent_path());
  save_image(img, path, ImageFormat::imf);
  const std::string hash = sha256_file(path);
  manifest["outputs"][rel] = hash;
  return hash;
}

// ---- styles -------------------------------------------------------------------

std::vector<StylePreset> configured_styles(const ExperimentConfig& cfg) {
  auto styles = cfg.styles_file.empty() ? default_styles() : load_styles(cfg.styles_file);
  for (const auto& s : styles) s.params.validate();
  return styles;
}

json style_json(const std::string& name, const StyleParams& p) {
  const StylePreset preset{name, p};
  return json::parse(styles_to_json(std::span<const StylePreset>(&preset, 1)))["styles"][0];
}

StyleParams style_from_json(const json& j) {
  json doc;
  doc["styles"] = json::array({j});
  return styles_from_json(doc.dump()).at(0).params;
}

// ---- loaded corpora ------------------------------------------------------------

std::string split_path(const std::string& artist, const char* split, std::size_t i) {
  return "data/" + artist + "/" + split + "/" + std::to_string(i) + ".imf";
}

struct LoadedBench {
  std::vector<StylePreset> styles;
  std::vector<ArtistCorpus> artists;  // content left empty
};

LoadedBench load_bench(const ExperimentConfig& cfg, const json& manifest) {
  LoadedBench b;
  json styles_doc;
  styles_doc["styles"] = manifest.at("styles");
  b.styles = styles_from_json(styles_doc.dump());
  for (const auto& a : manifest.at("artists")) {
    ArtistCorpus corpus;
    corpus.spec.name = a.at("name").get<std::string>();
    corpus.spec.style_name = a.at("style_name").get<std::string>();
    corpus.spec.style = style_from_json(a.at("style"));
    corpus.spec.content_seed = a.at("content_seed").get<std::uint64_t>();
    corpus.spec.in_pretraining = a.at("in_pretraining").get<bool>();
    const auto n_train = a.at("n_train").get<std::size_t>();
    const auto n_holdout = a.at("n_holdout").get<std::size_t>();
    for (std::size_t i = 0; i < n_train; ++i) {
      corpus.train.push_back(load_image(cfg.workdir / split_path(corpus.spec.name, "train", i)));
    }
    for (std::size_t i = 0; i < n_holdout; ++i) {
      corpus.holdout.push_back(load_image(cfg.workdir / split_path(corpus.spec.name, "holdout", i)));
    }
    b.artists.push_back(std::move(corpus));
  }
  return b;
}

std::vector<StyleParams> style_pool(const std::vector<StylePreset>& styles) {
  std::vector<StyleParams> pool;
  for (const auto& s : styles) pool.push_back(s.params);
  return pool;
}

// (artist index, train index) pairs for the cloaked subset.
struct ImageRef {
  std::size_t artist;
  std::size_t index;
};

std::vector<ImageRef> cloak_refs(const ExperimentConfig& cfg, const LoadedBench& b) {
  std::vector<ImageRef> refs;
  for (std::size_t a = 0; a < b.artists.size(); ++a) {
    if (static_cast<std::size_t>(cfg.bench.cloak_per_artist) > b.artists[a].train.size()) {
      throw ValidationError("bench.cloak_per_artist exceeds the train split of " + b.artists[a].spec.name);
    }
    for (int i = 0; i < cfg.bench.cloak_per_artist; ++i) refs.push_back({a, std::size_t(i)});
  }
  return refs;
}

std::vector<ImageRef> clean_purify_refs(const ExperimentConfig& cfg, const LoadedBench& b) {
  std::vector<std::size_t> textured;
  for (std::size_t a = 0; a < b.artists.size(); ++a) {
    if (b.artists[a].spec.smooth_category() == SurfaceCategory::textured) textured.push_back(a);
  }
  if (textured.empty()) throw ValidationError("the bench has no textured artist to purify");
  std::vector<ImageRef> refs;
  for (int k = 0; k < cfg.bench.clean_purify_count; ++k) {
    const ImageRef r{textured[k % textured.size()], k / textured.size()};
    if (r.index >= b.artists[r.artist].train.size()) {
      throw ValidationError("bench.clean_purify_count exceeds the textured train splits");
    }
    refs.push_back(r);
  }
  return refs;
}

std::string cloak_path(const LoadedBench& b, const ImageRef& r) {
  return "cloak/" + b.artists[r.artist].spec.name + "/" + std::to_string(r.index) + ".imf";
}

std::string purify_path(PurifySource s, const LoadedBench& b, const ImageRef& r) {
  return "purify/" + to_string(s) + "/" + b.artists[r.artist].spec.name + "/" + std::to_string(r.index) +
         ".imf";
}

const Image& clean_image(const LoadedBench& b, const ImageRef& r) {
  return b.artists[r.artist].train[r.index];
}

std::vector<Image> load_images(const ExperimentConfig& cfg, const std::vector<std::string>& rels) {
  std::vector<Image> out;
  out.reserve(rels.size());
  for (const auto& rel : rels) out.push_back(load_image(cfg.workdir / rel));
  return out;
}

std::vector<OptResult> purify_all(std::span<const Image> images, const Autoencoder& ae,
                                  const PerceptualMetric& m, OptConfig opt, std::uint64_t master_seed,
                                  int jobs) {
  std::vector<OptResult> results(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t k) {
    OptConfig c = opt;
    c.seed = derive_seed(derive_seed(master_seed, kPurifyStream), k);
    results[k] = purify(images[k], ae, m, c);
  });
  return results;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

json distance_json(const SignatureDistance& d) {
  return {{"total", d.total}, {"color", d.color}, {"texture", d.texture}, {"latent", d.latent}};
}

struct ModelBundle {
  Autoencoder ae;
  std::string weights_hash;
};

ModelBundle load_model(const ExperimentConfig& cfg) {
  verify_stage(cfg, kModelStage);
  const fs::path path = cfg.workdir / "model/ae.nnw";
  return {load_weights(path), sha256_file(path)};
}

json load_stage_records(const json& manifest) { return manifest.at("images"); }

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

std::string version_string() { return GLAZELAB_VERSION; }

// ---- config -------------------------------------------------------------------

namespace {

json opt_json(const OptConfig& c) {
  return {{"budget", tidy(c.budget)},
          {"steps", c.steps},
          {"lr", tidy(c.lr)},
          {"penalty_alpha", tidy(c.penalty_alpha)},
          {"alpha_growth", tidy(c.alpha_growth)}};
}

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ValidationError("config: unknown key '" + where + k + "'");
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_opt(const json& j, OptConfig& c, const std::string& where) {
  reject_unknown(j, {"budget", "steps", "lr", "penalty_alpha", "alpha_growth"}, where + ".");
  read_key(j, "budget", c.budget);
  read_key(j, "steps", c.steps);
  read_key(j, "lr", c.lr);
  read_key(j, "penalty_alpha", c.penalty_alpha);
  read_key(j, "alpha_growth", c.alpha_growth);
}

}  // namespace

void ExperimentConfig::validate() const {
  cloak.validate();
  purify.validate();
  if (train.epochs < 1 || train.batch < 1 || !(train.lr > 0)) {
    throw ValidationError("train: epochs >= 1, batch >= 1 and lr > 0 required");
  }
  if (genre.epochs < 1 || genre.batch < 1 || !(genre.lr > 0)) {
    throw ValidationError("genre: epochs >= 1, batch >= 1 and lr > 0 required");
  }
  if (bench.cloak_per_artist < 1 || bench.clean_purify_count < 1) {
    throw ValidationError("bench: cloak_per_artist and clean_purify_count must be >= 1");
  }
  if (bench.genre_train < 1 || bench.genre_images <= bench.genre_train) {
    throw ValidationError("bench: need 1 <= genre_train < genre_images");
  }
  for (double b : bench.sweep_budgets) {
    if (!(b > 0)) throw ValidationError("bench.sweep_budgets entries must be > 0");
  }
  if (workdir.empty()) throw ValidationError("workdir must not be empty");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["master_seed"] = master_seed;
  j["workdir"] = workdir.generic_string();
  j["styles_file"] = styles_file.generic_string();
  j["cloak"] = opt_json(cloak);
  j["purify"] = opt_json(purify);
  j["train"] = {{"epochs", train.epochs}, {"lr", tidy(train.lr)}, {"batch", train.batch}};
  j["genre"] = {{"epochs", genre.epochs}, {"lr", tidy(genre.lr)}, {"batch", genre.batch}};
  json sweep = json::array();
  for (double b : bench.sweep_budgets) sweep.push_back(tidy(b));
  j["bench"] = {{"cloak_per_artist", bench.cloak_per_artist},
                {"clean_purify_count", bench.clean_purify_count},
                {"genre_images", bench.genre_images},
                {"genre_train", bench.genre_train},
                {"sweep_budgets", sweep}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"master_seed", "workdir", "styles_file", "cloak", "purify", "train", "genre", "bench"},
                   "");
    read_key(j, "master_seed", c.master_seed);
    if (j.contains("workdir")) c.workdir = j["workdir"].get<std::string>();
    if (j.contains("styles_file")) c.styles_file = j["styles_file"].get<std::string>();
    if (j.contains("cloak")) read_opt(j["cloak"], c.cloak, "cloak");
    if (j.contains("purify")) read_opt(j["purify"], c.purify, "purify");
    if (j.contains("train")) {
      reject_unknown(j["train"], {"epochs", "lr", "batch"}, "train.");
      read_key(j["train"], "epochs", c.train.epochs);
      read_key(j["train"], "lr", c.train.lr);
      read_key(j["train"], "batch", c.train.batch);
    }
    if (j.contains("genre")) {
      reject_unknown(j["genre"], {"epochs", "lr", "batch"}, "genre.");
      read_key(j["genre"], "epochs", c.genre.epochs);
      read_key(j["genre"], "lr", c.genre.lr);
      read_key(j["genre"], "batch", c.genre.batch);
    }
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      reject_unknown(b, {"cloak_per_artist", "clean_purify_count", "genre_images", "genre_train", "sweep_budgets"},
                     "bench.");
      read_key(b, "cloak_per_artist", c.bench.cloak_per_artist);
      read_key(b, "clean_purify_count", c.bench.clean_purify_count);
      read_key(b, "genre_images", c.bench.genre_images);
      read_key(b, "genre_train", c.bench.genre_train);
      read_key(b, "sweep_budgets", c.bench.sweep_budgets);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  return from_json(read_text(path));
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::gap: return "gap";
    case Experiment::mimic: return "mimic";
    case Experiment::genre: return "genre";
    case Experiment::texture: return "texture";
    case Experiment::smooth: return "smooth";
  }
  return "?";
}

Experiment experiment_from_string(const std::string& s) {
  for (Experiment e : kAllExperiments) {
    if (to_string(e) == s) return e;
  }
  throw ValidationError("unknown experiment '" + s + "' (expected gap, mimic, genre, texture or smooth)");
}

std::string to_string(PurifySource s) { return s == PurifySource::cloak ? "cloak" : "clean"; }

PurifySource purify_source_from_string(const std::string& s) {
  if (s == "cloak") return PurifySource::cloak;
  if (s == "clean") return PurifySource::clean;
  throw ValidationError("unknown purify source '" + s + "' (expected cloak or clean)");
}

// ---- stages -------------------------------------------------------------------

void run_gen_data(const ExperimentConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  const auto styles = configured_styles(cfg);
  log(opts, "gen-data: generating the standard bench");
  const Bench bench = standard_bench(styles, opts.jobs, cfg.master_seed);

  fs::remove_all(cfg.workdir / "data");
  json m = stage_manifest(cfg, "gen-data");
  m["styles"] = json::parse(styles_to_json(styles))["styles"];
  m["artists"] = json::array();
  std::string corpus_digest;
  for (const auto& a : bench.artists) {
    json aj;
    aj["name"] = a.spec.name;
    aj["style_name"] = a.spec.style_name;
    aj["style"] = style_json(a.spec.style_name, a.spec.style);
    aj["content_seed"] = a.spec.content_seed;
    aj["in_pretraining"] = a.spec.in_pretraining;
    aj["surface"] = a.spec.smooth_category() == SurfaceCategory::smooth ? "smooth" : "textured";
    aj["n_train"] = a.train.size();
    aj["n_holdout"] = a.holdout.size();
    for (std::size_t i = 0; i < a.train.size(); ++i) {
      corpus_digest += save_tracked(cfg, m, split_path(a.spec.name, "train", i), a.train[i]);
    }
    for (std::size_t i = 0; i < a.holdout.size(); ++i) {
      corpus_digest += save_tracked(cfg, m, split_path(a.spec.name, "holdout", i), a.holdout[i]);
    }
    m["artists"].push_back(aj);
  }
  m["corpus_hash"] = sha256_hex(corpus_digest);
  write_json(cfg.workdir / kDataStage.manifest, m);
  log(opts, "gen-data: corpus " + m["corpus_hash"].get<std::string>());
}

void run_train_ae(const ExperimentConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  const json data = verify_stage(cfg, kDataStage);
  const LoadedBench b = load_bench(cfg, data);
  std::vector<Image> corpus;
  for (const auto& a : b.artists) {
    if (a.spec.in_pretraining) corpus.insert(corpus.end(), a.train.begin(), a.train.end());
  }
  if (corpus.empty()) throw ValidationError("no in_pretraining artist in the bench; nothing to train on");

  Rng rng(derive_seed(cfg.master_seed, kTrainStream));
  TrainConfig tc = cfg.train;
  tc.jobs = opts.jobs;
  log(opts, "train-ae: " + std::to_string(corpus.size()) + " images, " + std::to_string(tc.epochs) + " epochs");
  const TrainResult result = train(Autoencoder::he_initialized(rng), corpus, tc, rng, [&](int epoch, real loss) {
    if ((epoch + 1) % 10 == 0 || epoch + 1 == tc.epochs) {
      log(opts, "train-ae: epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
    }
  });

  json m = stage_manifest(cfg, "train-ae");
  m["inputs"][kDataStage.manifest] = manifest_hash(cfg, kDataStage);
  const fs::path weights = cfg.workdir / "model/ae.nnw";
  fs::create_directories(weights.parent_path());
  save_weights(result.model, weights);
  m["outputs"]["model/ae.nnw"] = sha256_file(weights);
  json losses = json::array();
  for (real l : result.loss_history) losses.push_back(double(l));
  m["loss_history"] = losses;

  json holdout = json::object();
  std::vector<double> in_pretraining_mse;
  for (const auto& a : b.artists) {
    std::vector<double> mse;
    for (const auto& img : a.holdout) {
      const double r = reconstruction_gap(result.model, img);
      mse.push_back(r * r);
    }
    holdout[a.spec.name] = mean_of(mse);
    if (a.spec.in_pretraining) in_pretraining_mse.insert(in_pretraining_mse.end(), mse.begin(), mse.end());
  }
  m["holdout_mse"] = holdout;
  m["holdout_mse_in_pretraining"] = mean_of(in_pretraining_mse);

  // Budget units in terms of visible noise, measured on held-out images.
  std::vector<Image> probes;
  for (const auto& a : b.artists) {
    if (a.spec.in_pretraining) probes.insert(probes.end(), a.holdout.begin(), a.holdout.end());
  }
  json calibration = json::array();
  for (const auto& row : pd_calibration(PerceptualMetric(result.model), probes, kCalibrationAmplitudes,
                                        derive_seed(cfg.master_seed, kCalibrationStream))) {
    calibration.push_back({{"noise_amplitude", row.amplitude}, {"median_pd", row.median_pd}, {"mean_pd", row.mean_pd}});
  }
  m["pd_calibration"] = calibration;
  write_json(cfg.workdir / kModelStage.manifest, m);
  log(opts, "train-ae: held-out in-pretraining MSE " + std::to_string(mean_of(in_pretraining_mse)));
}

void run_cloak(const ExperimentConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  const json data = verify_stage(cfg, kDataStage);
  const ModelBundle model = load_model(cfg);
  const LoadedBench b = load_bench(cfg, data);
  const PerceptualMetric metric(model.ae);
  const auto pool = style_pool(b.styles);

  // One target per artist, chosen on the unstylized first content image.
  std::vector<std::size_t> targets;
  for (const auto& a : b.artists) {
    const Image probe = generate_content(a.spec.content_seed, 1)[0];
    targets.push_back(select_target_style_index(a.spec.style, pool, metric, probe));
  }

  const auto refs = cloak_refs(cfg, b);
  log(opts, "cloak: " + std::to_string(refs.size()) + " images at budget " + std::to_string(cfg.cloak.budget));
  std::vector<OptResult> results(refs.size());
  parallel_for(refs.size(), opts.jobs, [&](std::size_t k) {
    OptConfig c = cfg.cloak;
    c.seed = derive_seed(derive_seed(cfg.master_seed, kCloakStream), k);
    results[k] = cloak(clean_image(b, refs[k]), pool[targets[refs[k].artist]], model.ae, metric, c);
  });

  fs::remove_all(cfg.workdir / "cloak");
  json m = stage_manifest(cfg, "cloak");
  m["inputs"][kDataStage.manifest] = manifest_hash(cfg, kDataStage);
  m["inputs"][kModelStage.manifest] = manifest_hash(cfg, kModelStage);
  m["targets"] = json::object();
  for (std::size_t a = 0; a < b.artists.size(); ++a) m["targets"][b.artists[a].spec.name] = b.styles[targets[a]].name;
  m["images"] = json::array();
  int satisfied = 0;
  int success = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Image& x = clean_image(b, refs[k]);
    const StyleParams& t = pool[targets[refs[k].artist]];
    const Latent goal = encode(model.ae, stylize(x, t));
    const double before = latent_l2(encode(model.ae, x), goal);
    const double after = latent_l2(encode(model.ae, results[k].output), goal);
    const double ratio = before > 0 ? after / before : 0.0;
    const bool ok = results[k].constraint_satisfied;
    satisfied += ok;
    success += ok && ratio <= 0.5;
    const std::string rel = cloak_path(b, refs[k]);
    save_tracked(cfg, m, rel, results[k].output);
    m["images"].push_back({{"artist", b.artists[refs[k].artist].spec.name},
                           {"index", refs[k].index},
                           {"file", rel},
                           {"target_style", b.styles[targets[refs[k].artist]].name},
                           {"final_pd", double(results[k].final_pd)},
                           {"constraint_satisfied", ok},
                           {"selected_step", results[k].selected_step},
                           {"latent_distance_clean", before},
                           {"latent_distance_cloaked", after},
                           {"latent_ratio", ratio}});
  }
  const double n = double(refs.size());
  m["summary"] = {{"n", refs.size()},
                  {"constraint_satisfied_fraction", satisfied / n},
                  {"latent_success_fraction", success / n}};
  write_json(cfg.workdir / kCloakStage.manifest, m);
  log(opts, "cloak: feasible " + std::to_string(satisfied) + "/" + std::to_string(refs.size()) +
                ", latent target reached " + std::to_string(success) + "/" + std::to_string(refs.size()));
}

void run_purify(const ExperimentConfig& cfg, PurifySource source, const StageOptions& opts) {
  cfg.validate();
  const json data = verify_stage(cfg, kDataStage);
  const ModelBundle model = load_model(cfg);
  const LoadedBench b = load_bench(cfg, data);
  const PerceptualMetric metric(model.ae);

  std::vector<ImageRef> refs;
  std::vector<Image> inputs;
  json m = stage_manifest(cfg, "purify");
  m["source"] = to_string(source);
  m["inputs"][kDataStage.manifest] = manifest_hash(cfg, kDataStage);
  m["inputs"][kModelStage.manifest] = manifest_hash(cfg, kModelStage);
  if (source == PurifySource::cloak) {
    verify_stage(cfg, kCloakStage);
    m["inputs"][kCloakStage.manifest] = manifest_hash(cfg, kCloakStage);
    refs = cloak_refs(cfg, b);
    std::vector<std::string> rels;
    for (const auto& r : refs) rels.push_back(cloak_path(b, r));
    inputs = load_images(cfg, rels);
  } else {
    refs = clean_purify_refs(cfg, b);
    for (const auto& r : refs) inputs.push_back(clean_image(b, r));
  }

  log(opts, "purify: " + std::to_string(inputs.size()) + " " + to_string(source) + " images at budget " +
                std::to_string(cfg.purify.budget));
  const auto results = purify_all(inputs, model.ae, metric, cfg.purify, cfg.master_seed, opts.jobs);

  fs::remove_all(cfg.workdir / "purify" / to_string(source));
  m["images"] = json::array();
  int satisfied = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const std::string rel = purify_path(source, b, refs[k]);
    save_tracked(cfg, m, rel, results[k].output);
    satisfied += results[k].constraint_satisfied;
    m["images"].push_back({{"artist", b.artists[refs[k].artist].spec.name},
                           {"index", refs[k].index},
                           {"file", rel},
                           {"final_pd", double(results[k].final_pd)},
                           {"constraint_satisfied", bool(results[k].constraint_satisfied)},
                           {"selected_step", results[k].selected_step},
                           {"gap", double(reconstruction_gap(model.ae, results[k].output))}});
  }
  m["summary"] = {{"n", refs.size()}, {"constraint_satisfied_fraction", satisfied / double(refs.size())}};
  write_json(cfg.workdir / purify_stage(source).manifest, m);
  log(opts, "purify: feasible " + std::to_string(satisfied) + "/" + std::to_string(refs.size()));
}

// ---- experiments ----------------------------------------------------------------

namespace {

struct EvalContext {
  const ExperimentConfig& cfg;
  const StageOptions& opts;
  json data;
  LoadedBench bench;
};

EvalContext eval_context(const ExperimentConfig& cfg, const StageOptions& opts) {
  json data = verify_stage(cfg, kDataStage);
  LoadedBench b = load_bench(cfg, data);
  return {cfg, opts, std::move(data), std::move(b)};
}

json eval_header(const ExperimentConfig& cfg, Experiment e) {
  json j;
  j["experiment"] = to_string(e);
  j["version"] = version_string();
  j["config"] = config_json(cfg);
  j["inputs"] = json::object();
  return j;
}

// Clean train images and their stored counterparts from a stage manifest.
struct Paired {
  std::vector<ImageRef> refs;
  std::vector<Image> clean;
  std::vector<Image> treated;
};

Paired paired_images(const EvalContext& ctx, const json& manifest) {
  Paired p;
  std::vector<std::string> rels;
  for (const auto& rec : load_stage_records(manifest)) {
    const auto name = rec.at("artist").get<std::string>();
    std::size_t a = 0;
    while (a < ctx.bench.artists.size() && ctx.bench.artists[a].spec.name != name) ++a;
    if (a == ctx.bench.artists.size()) throw ValidationError("stage manifest names unknown artist " + name);
    const ImageRef r{a, rec.at("index").get<std::size_t>()};
    if (r.index >= ctx.bench.artists[a].train.size()) throw ValidationError("stage manifest index out of range");
    p.refs.push_back(r);
    p.clean.push_back(clean_image(ctx.bench, r));
    rels.push_back(rec.at("file").get<std::string>());
  }
  p.treated = load_images(ctx.cfg, rels);
  return p;
}

std::vector<Image> select(const std::vector<Image>& images, const std::vector<ImageRef>& refs, std::size_t artist) {
  std::vector<Image> out;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (refs[k].artist == artist) out.push_back(images[k]);
  }
  return out;
}

json eval_gap(const EvalContext& ctx) {
  const auto& cfg = ctx.cfg;
  const ModelBundle model = load_model(cfg);
  const json cloak_m = verify_stage(cfg, kCloakStage);
  const Paired p = paired_images(ctx, cloak_m);
  const GapReport report = gap_report(model.ae, p.clean, p.treated, ctx.opts.jobs);

  json j = eval_header(cfg, Experiment::gap);
  j["inputs"][kModelStage.manifest] = manifest_hash(cfg, kModelStage);
  j["inputs"][kCloakStage.manifest] = manifest_hash(cfg, kCloakStage);
  j["n_clean"] = report.clean.size();
  j["n_treated"] = report.treated.size();
  j["mean_clean"] = report.mean_clean;
  j["mean_treated"] = report.mean_treated;
  j["cohens_d"] = report.cohens_d;
  j["sd_clean"] = report.sd_clean;
  j["sd_treated"] = report.sd_treated;
  j["cloak_contract"] = cloak_m.at("summary");

  const StageInfo pur = purify_stage(PurifySource::cloak);
  if (fs::exists(cfg.workdir / pur.manifest)) {
    const json pm = verify_stage(cfg, pur);
    j["inputs"][pur.manifest] = manifest_hash(cfg, pur);
    const Paired q = paired_images(ctx, pm);
    std::vector<double> gaps(q.treated.size());
    parallel_for(q.treated.size(), ctx.opts.jobs,
                 [&](std::size_t k) { gaps[k] = reconstruction_gap(model.ae, q.treated[k]); });
    const double mean = mean_of(gaps);
    j["purified"] = {{"n", gaps.size()},
                     {"mean_gap", mean},
                     {"ratio_to_clean", report.mean_clean > 0 ? mean / report.mean_clean : 0.0},
                     {"constraint_satisfied_fraction", pm.at("summary").at("constraint_satisfied_fraction")}};
  } else {
    j["purified"] = nullptr;
  }

  const fs::path csv = cfg.workdir / "eval/gap.csv";
  write_text(csv, report.to_csv());
  j["csv"] = {{"file", "eval/gap.csv"}, {"sha256", sha256_file(csv)}};
  return j;
}

// Purified copies of `images` at each sweep budget (the configured budget's
// results are reused).
template <typename Measure>
json budget_sweep(const EvalContext& ctx, const Autoencoder& ae, std::span<const Image> images,
                  const std::vector<Image>& at_config, Measure&& measure) {
  const PerceptualMetric metric(ae);
  json sweep = json::array();
  for (double budget : ctx.cfg.bench.sweep_budgets) {
    json row;
    if (near(budget, ctx.cfg.purify.budget)) {
      row = measure(at_config);
    } else {
      OptConfig c = ctx.cfg.purify;
      c.budget = static_cast<real>(budget);
      log(ctx.opts, "sweep: purifying " + std::to_string(images.size()) + " images at budget " + std::to_string(budget));
      std::vector<Image> out;
      for (auto& r : purify_all(images, ae, metric, c, ctx.cfg.master_seed, ctx.opts.jobs)) out.push_back(r.output);
      row = measure(out);
    }
    row["budget"] = tidy(budget);
    sweep.push_back(row);
  }
  return sweep;
}

// Directional outcome: holds at the configured budget, or (fallback) at any
// swept budget >= 0.05.
void settle_direction(json& j, bool holds_default,
                      const std::function<json()>& run_sweep) {
  j["holds_at_default"] = holds_default;
  if (holds_default) {
    j["sweep"] = nullptr;
    j["holds"] = true;
    return;
  }
  json sweep = run_sweep();
  bool any = false;
  for (const auto& row : sweep) {
    if (row.at("budget").get<double>() >= 0.05 - 1e-12 && row.at("holds").get<bool>()) any = true;
  }
  j["sweep"] = sweep;
  j["holds"] = any;
}

json eval_mimic(const EvalContext& ctx) {
  const auto& cfg = ctx.cfg;
  const ModelBundle model = load_model(cfg);
  const json cloak_m = verify_stage(cfg, kCloakStage);
  const StageInfo pur = purify_stage(PurifySource::cloak);
  const json pur_m = verify_stage(cfg, pur);
  const Paired cl = paired_images(ctx, cloak_m);
  const Paired pu = paired_images(ctx, pur_m);
  json j = eval_header(cfg, Experiment::mimic);
  j["inputs"][kModelStage.manifest] = manifest_hash(cfg, kModelStage);
  j["inputs"][kCloakStage.manifest] = manifest_hash(cfg, kCloakStage);
  j["inputs"][pur.manifest] = manifest_hash(cfg, pur);

  // Per-artist clean scores do not depend on the purification budget.
  std::vector<double> clean_scores(ctx.bench.artists.size());
  j["artists"] = json::array();
  for (std::size_t a = 0; a < ctx.bench.artists.size(); ++a) {
    const auto& artist = ctx.bench.artists[a];
    const auto clean = select(cl.clean, cl.refs, a);
    const auto cloaked = select(cl.treated, cl.refs, a);
    const auto purified = select(pu.treated, pu.refs, a);
    const auto s_clean = mimic_score(model.ae, clean, artist.holdout);
    const auto s_cloak = mimic_score(model.ae, cloaked, artist.holdout);
    const auto s_pur = mimic_score(model.ae, purified, artist.holdout);
    clean_scores[a] = s_clean.total;

    // Where the cloak pulls the learned signature: the artist's content
    // rendered in the target style.
    const std::string target_name = cloak_m.at("targets").at(artist.spec.name).get<std::string>();
    const StyleParams& target = find_style(ctx.bench.styles, target_name).params;
    std::vector<Image> target_corpus;
    for (const auto& c : generate_content(artist.spec.content_seed, int(artist.train.size()))) {
      target_corpus.push_back(stylize(c, target));
    }
    const auto sig_target = style_signature(model.ae, target_corpus);
    const double clean_to_target = signature_distance(style_signature(model.ae, clean), sig_target);
    const double cloak_to_target = signature_distance(style_signature(model.ae, cloaked), sig_target);

    j["artists"].push_back({{"artist", artist.spec.name},
                            {"in_pretraining", artist.spec.in_pretraining},
                            {"target_style", target_name},
                            {"clean", distance_json(s_clean)},
                            {"cloaked", distance_json(s_cloak)},
                            {"purified", distance_json(s_pur)},
                            {"degradation", s_pur.total - s_clean.total},
                            {"clean_to_target", clean_to_target},
                            {"cloaked_to_target", cloak_to_target}});
  }

  auto measure = [&](const std::vector<Image>& purified_all) {
    std::vector<double> hist, fresh;
    for (std::size_t a = 0; a < ctx.bench.artists.size(); ++a) {
      const auto purified = select(purified_all, pu.refs, a);
      const double d = mimic_score(model.ae, purified, ctx.bench.artists[a].holdout).total - clean_scores[a];
      (ctx.bench.artists[a].spec.in_pretraining ? hist : fresh).push_back(d);
    }
    const double mh = mean_of(hist);
    const double mf = mean_of(fresh);
    return json{{"mean_degradation_in_pretraining", mh},
                {"mean_degradation_not_in_pretraining", mf},
                {"holds", mf > mh}};
  };
  const json at_default = measure(pu.treated);
  j["groups"] = at_default;
  settle_direction(j, at_default.at("holds").get<bool>(),
                   [&] { return budget_sweep(ctx, model.ae, cl.treated, pu.treated, measure); });
  return j;
}

json eval_genre(const EvalContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& styles = ctx.bench.styles;
  const auto content =
      generate_content(kGenreContentSeed ^ master_seed_offset(cfg.master_seed), cfg.bench.genre_images);
  std::vector<Image> train_set, holdout, blurred;
  std::vector<int> train_labels, holdout_labels;
  std::vector<std::string> names;
  for (std::size_t g = 0; g < styles.size(); ++g) {
    names.push_back(styles[g].name);
    for (int i = 0; i < cfg.bench.genre_images; ++i) {
      Image img = stylize(content[i], styles[g].params);
      if (i < cfg.bench.genre_train) {
        train_set.push_back(std::move(img));
        train_labels.push_back(int(g));
      } else {
        holdout.push_back(std::move(img));
        holdout_labels.push_back(int(g));
      }
    }
  }
  log(ctx.opts, "genre: training on " + std::to_string(train_set.size()) + " images");
  Rng rng(derive_seed(cfg.master_seed, kGenreStream));
  const GenreClassifier clf = train_genre_classifier(train_set, train_labels, names, cfg.genre, rng);

  std::vector<double> retention;
  for (const auto& img : holdout) {
    blurred.push_back(gaussian_blur(img, real(kGenreBlurSigma)));
    retention.push_back(texture_retention(img, blurred.back()));
  }
  json j = eval_header(cfg, Experiment::genre);
  j["inputs"][kDataStage.manifest] = manifest_hash(cfg, kDataStage);
  j["labels"] = names;
  j["n_train"] = train_set.size();
  j["n_holdout"] = holdout.size();
  j["train_accuracy"] = genre_accuracy(clf, train_set, train_labels);
  j["holdout_accuracy"] = genre_accuracy(clf, holdout, holdout_labels);
  j["blur_sigma"] = kGenreBlurSigma;
  j["blurred_accuracy"] = genre_accuracy(clf, blurred, holdout_labels);
  j["blurred_texture_retention_median"] = median(retention);
  return j;
}

json eval_texture(const EvalContext& ctx) {
  const auto& cfg = ctx.cfg;
  const ModelBundle model = load_model(cfg);
  const StageInfo pur = purify_stage(PurifySource::clean);
  const json pur_m = verify_stage(cfg, pur);
  const Paired p = paired_images(ctx, pur_m);

  json j = eval_header(cfg, Experiment::texture);
  j["inputs"][kModelStage.manifest] = manifest_hash(cfg, kModelStage);
  j["inputs"][pur.manifest] = manifest_hash(cfg, pur);
  j["n"] = p.refs.size();

  std::set<std::size_t> artists;
  for (const auto& r : p.refs) artists.insert(r.artist);
  std::vector<double> clean_scores;
  for (std::size_t a : artists) {
    clean_scores.push_back(mimic_score(model.ae, select(p.clean, p.refs, a), ctx.bench.artists[a].holdout).total);
  }

  auto measure = [&](const std::vector<Image>& purified) {
    std::vector<double> retention;
    for (std::size_t k = 0; k < purified.size(); ++k) retention.push_back(texture_retention(p.clean[k], purified[k]));
    json per_artist = json::array();
    std::vector<double> pur_scores;
    std::size_t idx = 0;
    for (std::size_t a : artists) {
      const double s = mimic_score(model.ae, select(purified, p.refs, a), ctx.bench.artists[a].holdout).total;
      pur_scores.push_back(s);
      per_artist.push_back({{"artist", ctx.bench.artists[a].spec.name},
                            {"mimic_clean", clean_scores[idx]},
                            {"mimic_purified", s}});
      ++idx;
    }
    const double med = median(retention);
    const double mc = mean_of(clean_scores);
    const double mp = mean_of(pur_scores);
    return json{{"texture_retention_median", med},
                {"mean_mimic_clean", mc},
                {"mean_mimic_purified", mp},
                {"artists", per_artist},
                {"holds", med < 0.95 && mp > mc}};
  };
  const json at_default = measure(p.treated);
  j["result"] = at_default;
  settle_direction(j, at_default.at("holds").get<bool>(),
                   [&] { return budget_sweep(ctx, model.ae, p.clean, p.treated, measure); });
  return j;
}

json eval_smooth(const EvalContext& ctx) {
  const auto& cfg = ctx.cfg;
  const ModelBundle model = load_model(cfg);
  const json cloak_m = verify_stage(cfg, kCloakStage);
  const StageInfo pur = purify_stage(PurifySource::cloak);
  const json pur_m = verify_stage(cfg, pur);
  const Paired cl = paired_images(ctx, cloak_m);
  const Paired pu = paired_images(ctx, pur_m);

  json j = eval_header(cfg, Experiment::smooth);
  j["inputs"][kCloakStage.manifest] = manifest_hash(cfg, kCloakStage);
  j["inputs"][pur.manifest] = manifest_hash(cfg, pur);

  // Baseline: mean finest-band energy of the artist's clean train corpus.
  std::vector<double> baseline(ctx.bench.artists.size());
  for (std::size_t a = 0; a < ctx.bench.artists.size(); ++a) {
    std::vector<double> e;
    for (const auto& img : ctx.bench.artists[a].train) e.push_back(band_energies(img)[0]);
    baseline[a] = mean_of(e);
  }

  auto measure = [&](const std::vector<Image>& purified) {
    json per_artist = json::array();
    std::vector<double> smooth, textured;
    for (std::size_t a = 0; a < ctx.bench.artists.size(); ++a) {
      std::vector<double> art;
      for (std::size_t k = 0; k < pu.refs.size(); ++k) {
        if (pu.refs[k].artist == a) art.push_back(artifact_energy(pu.clean[k], purified[k]));
      }
      const auto& spec = ctx.bench.artists[a].spec;
      const double ratio = mean_of(art) / (baseline[a] + 1e-10);
      const bool is_smooth = spec.smooth_category() == SurfaceCategory::smooth;
      std::string group = "none";
      if (is_smooth && spec.in_pretraining) {
        smooth.push_back(ratio);
        group = "smooth";
      } else if (!is_smooth) {
        textured.push_back(ratio);
        group = "textured";
      }
      per_artist.push_back({{"artist", spec.name},
                            {"surface", is_smooth ? "smooth" : "textured"},
                            {"group", group},
                            {"mean_artifact_energy", mean_of(art)},
                            {"baseline_energy", baseline[a]},
                            {"normalized_artifact", ratio}});
    }
    const double ms = mean_of(smooth);
    const double mt = mean_of(textured);
    return json{{"artists", per_artist},
                {"mean_normalized_smooth", ms},
                {"mean_normalized_textured", mt},
                {"holds", !smooth.empty() && !textured.empty() && ms > mt}};
  };
  const json at_default = measure(pu.treated);
  j["result"] = at_default;
  settle_direction(j, at_default.at("holds").get<bool>(),
                   [&] { return budget_sweep(ctx, model.ae, cl.treated, pu.treated, measure); });
  return j;
}

}  // namespace

fs::path run_eval(const ExperimentConfig& cfg, Experiment experiment, const StageOptions& opts) {
  cfg.validate();
  const EvalContext ctx = eval_context(cfg, opts);
  log(opts, "eval: " + to_string(experiment));
  json j;
  switch (experiment) {
    case Experiment::gap: j = eval_gap(ctx); break;
    case Experiment::mimic: j = eval_mimic(ctx); break;
    case Experiment::genre: j = eval_genre(ctx); break;
    case Experiment::texture: j = eval_texture(ctx); break;
    case Experiment::smooth: j = eval_smooth(ctx); break;
  }
  j["inputs"][kDataStage.manifest] = manifest_hash(cfg, kDataStage);
  j["corpus_hash"] = ctx.data.at("corpus_hash");
  const fs::path out = cfg.workdir / "eval" / (to_string(experiment) + ".json");
  write_json(out, j);
  return out;
}

std::string run_report(const ExperimentConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  const json data = verify_stage(cfg, kDataStage);
  const json model = verify_stage(cfg, kModelStage);

  json r;
  r["version"] = version_string();
  r["config"] = config_json(cfg);
  r["corpus_hash"] = data.at("corpus_hash");
  r["weights_hash"] = model.at("outputs").at("model/ae.nnw");
  r["holdout_mse_in_pretraining"] = model.at("holdout_mse_in_pretraining");
  r["pd_calibration"] = model.at("pd_calibration");
  r["stages"] = json::object();
  for (const StageInfo& s : {kDataStage, kModelStage, kCloakStage, purify_stage(PurifySource::cloak),
                             purify_stage(PurifySource::clean)}) {
    if (fs::exists(cfg.workdir / s.manifest)) {
      verify_stage(cfg, s);
      r["stages"][s.manifest] = manifest_hash(cfg, s);
    }
  }
  r["experiments"] = json::object();
  for (Experiment e : kAllExperiments) {
    const fs::path path = cfg.workdir / "eval" / (to_string(e) + ".json");
    if (!fs::exists(path)) continue;
    json ej = json::parse(read_text(path));
    // Stale if any input it was computed from has changed since.
    for (const auto& [rel, hash] : ej.at("inputs").items()) {
      if (!fs::exists(cfg.workdir / rel) || sha256_file(cfg.workdir / rel) != hash.get<std::string>()) {
        throw ValidationError("eval/" + to_string(e) + ".json is stale (" + rel +
                              " changed); rerun `glazelab eval --experiment " + to_string(e) + "`");
      }
    }
    if (ej.contains("csv")) {
      const auto file = ej["csv"].at("file").get<std::string>();
      if (sha256_file(cfg.workdir / file) != ej["csv"].at("sha256").get<std::string>()) {
        throw ValidationError("hash mismatch for " + file + "; rerun `glazelab eval --experiment gap`");
      }
    }
    r["experiments"][to_string(e)] = {{"file", "eval/" + to_string(e) + ".json"},
                                      {"sha256", sha256_file(path)},
                                      {"summary", ej}};
    r["experiments"][to_string(e)]["summary"].erase("config");
  }
  const fs::path out = cfg.workdir / "report.json";
  write_json(out, r);
  const std::string hash = sha256_file(out);
  write_text(cfg.workdir / "report.sha256", hash + "  report.json\n");
  log(opts, "report: " + hash);
  return hash;
}

std::string run_all(const ExperimentConfig& cfg, const StageOptions& opts) {
  run_gen_data(cfg, opts);
  run_train_ae(cfg, opts);
  run_cloak(cfg, opts);
  run_purify(cfg, PurifySource::cloak, opts);
  run_purify(cfg, PurifySource::clean, opts);
  for (Experiment e : kAllExperiments) run_eval(cfg, e, opts);
  return run_report(cfg, opts);
}

}  // namespace glazelab
