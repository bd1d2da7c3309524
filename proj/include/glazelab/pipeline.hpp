#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "glazelab/autoencoder.hpp"
#include "glazelab/evaluation.hpp"
#include "glazelab/perturb.hpp"

namespace glazelab::inline GLAZELAB_ABI {

// git-describe style, fixed at configure time.
std::string version_string();

struct BenchSelection {
  // The first N train images of every artist are cloaked (and later purified).
  int cloak_per_artist = 5;
  // Clean textured images purified directly, drawn round-robin over the
  // textured artists.
  int clean_purify_count = 20;
  // Images per preset for the genre classifier, the first genre_train of
  // which are used for training.
  int genre_images = 40;
  int genre_train = 30;
  // Purification budgets re-run when a directional check fails at the
  // configured budget.
  std::vector<double> sweep_budgets{0.03, 0.05, 0.07, 0.1};
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  std::filesystem::path workdir = "glazelab-work";
  std::filesystem::path styles_file;  // empty: built-in presets
  OptConfig cloak;
  OptConfig purify;
  TrainConfig train;  // `jobs` is a runtime option and is not serialized
  GenreTrainConfig genre;
  BenchSelection bench;

  void validate() const;
  // Canonical JSON; this exact text is echoed into every manifest and report.
  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

enum class Experiment { gap, mimic, genre, texture, smooth };
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);
inline constexpr Experiment kAllExperiments[] = {Experiment::gap, Experiment::mimic,
                                                 Experiment::genre, Experiment::texture,
                                                 Experiment::smooth};

enum class PurifySource { cloak, clean };
std::string to_string(PurifySource s);
PurifySource purify_source_from_string(const std::string& s);

struct StageOptions {
  int jobs = 1;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

// Workdir layout:
//   data/<artist>/{train,holdout}/<i>.imf   data/manifest.json
//   model/ae.nnw                            model/manifest.json
//   cloak/<artist>/<i>.imf                  cloak/manifest.json
//   purify/<source>/<artist>/<i>.imf        purify/<source>/manifest.json
//   eval/<experiment>.json (+ eval/gap.csv)
//   report.json
// Every stage verifies the hashes recorded by the stages it depends on and
// throws ValidationError on a missing prerequisite or a mismatch.
void run_gen_data(const ExperimentConfig& cfg, const StageOptions& opts = {});
void run_train_ae(const ExperimentConfig& cfg, const StageOptions& opts = {});
void run_cloak(const ExperimentConfig& cfg, const StageOptions& opts = {});
void run_purify(const ExperimentConfig& cfg, PurifySource source, const StageOptions& opts = {});
// Returns the path of the JSON summary.
std::filesystem::path run_eval(const ExperimentConfig& cfg, Experiment experiment,
                               const StageOptions& opts = {});
// Collects every finished experiment into report.json; returns its SHA-256.
std::string run_report(const ExperimentConfig& cfg, const StageOptions& opts = {});

// Every stage in order, every experiment, then the report.
std::string run_all(const ExperimentConfig& cfg, const StageOptions& opts = {});

}  // namespace glazelab
