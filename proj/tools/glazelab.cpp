#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "glazelab/pipeline.hpp"

using namespace glazelab;

namespace {

struct Flags {
  std::string config;
  std::string workdir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<double> budget;
  std::optional<int> steps;
  std::optional<int> epochs;
  std::string source = "cloak";
  std::string experiment;
  bool quiet = false;
};

// Config file first, then flags on top.
ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(f.config);
  if (!f.workdir.empty()) cfg.workdir = f.workdir;
  if (f.seed) cfg.master_seed = *f.seed;
  cfg.validate();
  return cfg;
}

void apply_opt_overrides(const Flags& f, OptConfig& c) {
  if (f.budget) c.budget = static_cast<real>(*f.budget);
  if (f.steps) c.steps = *f.steps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloak / purify perturbation lab on a synthetic art bench"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", version_string());

  Flags f;
  app.add_option("--config", f.config, "JSON experiment config");
  app.add_option("--workdir", f.workdir, "working directory (overrides the config)");
  app.add_option("--seed", f.seed, "master seed (overrides the config)");
  app.add_option("--jobs", f.jobs, "worker threads for per-image work")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", f.quiet, "no progress lines on stderr");

  auto* gen = app.add_subcommand("gen-data", "generate the artist corpora");
  auto* train = app.add_subcommand("train-ae", "train the autoencoder on the in-pretraining artists");
  train->add_option("--epochs", f.epochs, "override train.epochs")->check(CLI::PositiveNumber);
  auto* cloak = app.add_subcommand("cloak", "cloak the first train images of every artist");
  cloak->add_option("--budget", f.budget, "override cloak.budget");
  cloak->add_option("--steps", f.steps, "override cloak.steps");
  auto* purify = app.add_subcommand("purify", "purify cloaked (or clean textured) images");
  purify->add_option("--source", f.source, "cloak | clean")->check(CLI::IsMember({"cloak", "clean"}));
  purify->add_option("--budget", f.budget, "override purify.budget");
  purify->add_option("--steps", f.steps, "override purify.steps");
  auto* eval = app.add_subcommand("eval", "run one experiment");
  eval->add_option("--experiment", f.experiment, "gap | mimic | genre | texture | smooth")
      ->required()
      ->check(CLI::IsMember({"gap", "mimic", "genre", "texture", "smooth"}));
  auto* report = app.add_subcommand("report", "collect finished experiments into report.json");
  auto* all = app.add_subcommand("all", "every stage, every experiment, then the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    ExperimentConfig cfg = resolve(f);
    StageOptions opts;
    opts.jobs = f.jobs;
    if (!f.quiet) opts.log = [](const std::string& line) { std::cerr << line << '\n'; };

    if (gen->parsed()) {
      run_gen_data(cfg, opts);
    } else if (train->parsed()) {
      if (f.epochs) cfg.train.epochs = *f.epochs;
      run_train_ae(cfg, opts);
    } else if (cloak->parsed()) {
      apply_opt_overrides(f, cfg.cloak);
      run_cloak(cfg, opts);
    } else if (purify->parsed()) {
      apply_opt_overrides(f, cfg.purify);
      run_purify(cfg, purify_source_from_string(f.source), opts);
    } else if (eval->parsed()) {
      std::cout << run_eval(cfg, experiment_from_string(f.experiment), opts).string() << '\n';
    } else if (report->parsed()) {
      std::cout << run_report(cfg, opts) << '\n';
    } else if (all->parsed()) {
      std::cout << run_all(cfg, opts) << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
