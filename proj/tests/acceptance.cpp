// End-to-end acceptance run: every stage at default settings, then a second
// full run elsewhere to check reproducibility. One PASS/FAIL line per
// criterion on stdout; progress on stderr.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "acceptance_numerics.hpp"
#include "glazelab/autoencoder.hpp"
#include "glazelab/dataset.hpp"
#include "glazelab/hash.hpp"
#include "glazelab/perceptual.hpp"
#include "glazelab/perturb.hpp"
#include "glazelab/pipeline.hpp"
#include "json.hpp"

using namespace glazelab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double minutes_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read " + p.string());
  return json::parse(in);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

int failures = 0;

void verdict(const std::string& id, bool pass, const std::string& what, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << id << ' ' << (pass ? "PASS" : "FAIL") << "  " << what << "  | " << detail << std::endl;
}

// Supporting regression checks, reported under the criterion they back.
void check(const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << "   check " << name << ": " << (pass ? "PASS" : "FAIL") << "  | " << detail << std::endl;
}

// Directional criteria: the measured row at the configured budget, else any
// sweep row at budget >= 0.05.
struct Direction {
  bool pass = false;
  std::string detail;
};

Direction settle(const json& eval, const char* row_key, const std::function<bool(const json&)>& holds,
                 const std::function<std::string(const json&)>& describe) {
  Direction d;
  const json& at_default = eval.at(row_key);
  d.detail = "default: " + describe(at_default) + (holds(at_default) ? " (holds)" : " (fails)");
  if (holds(at_default)) {
    d.pass = true;
    return d;
  }
  if (eval.at("sweep").is_null()) {
    d.detail += "; no sweep emitted";
    return d;
  }
  for (const auto& row : eval.at("sweep")) {
    const double budget = row.at("budget").get<double>();
    const bool ok = holds(row);
    d.detail += "; budget " + fmt(budget, 2) + ": " + describe(row) + (ok ? " (holds)" : " (fails)");
    if (ok && budget >= 0.05 - 1e-12) d.pass = true;
  }
  return d;
}

void log_line(const std::string& s) { std::cerr << "  " << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = fs::absolute(argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance-run");
  const fs::path first = root / "first";
  const fs::path second = root / "second";
  fs::remove_all(root);
  fs::create_directories(first);
  fs::create_directories(second);
  const fs::path start_dir = fs::current_path();

  const ExperimentConfig cfg;  // defaults; relative workdir
  const fs::path work = first / cfg.workdir;
  StageOptions opts;
  opts.log = log_line;

  std::cout << "glazelab " << version_string() << " acceptance, run directory " << root.string() << std::endl;

  try {
    // ---- numerical soundness (double precision build) -------------------
    auto t = Clock::now();
    std::cerr << "gradient checks" << std::endl;
    const auto grads = acceptance_numerics::gradient_checks();
    const double conv_err = acceptance_numerics::conv_forward_error();
    double worst = 0;
    std::string worst_name;
    bool grads_ok = acceptance_numerics::high_precision() && !grads.empty();
    for (const auto& g : grads) {
      std::cout << "   gradcheck " << g.name << ": max rel err " << fmt(g.max_rel_error, 3) << " over "
                << g.coordinates << " coordinates" << std::endl;
      grads_ok = grads_ok && g.coordinates > 0 && g.max_rel_error <= 1e-4;
      if (g.max_rel_error >= worst) {
        worst = g.max_rel_error;
        worst_name = g.name;
      }
    }
    const double a1_minutes = minutes_since(t);

    fs::current_path(first);

    // ---- training and cloaking ------------------------------------------
    t = Clock::now();
    run_gen_data(cfg, opts);
    run_train_ae(cfg, opts);
    const double train_minutes = minutes_since(t);

    // Calibration table of the trained metric, reproduced here from scratch.
    t = Clock::now();
    const Autoencoder ae = load_weights(work / "model/ae.nnw");
    std::vector<Image> probes;
    for (const auto& a : standard_bench(default_styles(), 1, cfg.master_seed).artists) {
      if (a.spec.in_pretraining) probes.insert(probes.end(), a.holdout.begin(), a.holdout.end());
    }
    const auto table = pd_calibration(PerceptualMetric(ae), probes, kCalibrationAmplitudes, 0xCA1);
    bool monotone = true;
    std::cout << "   pd calibration (uniform noise amplitude -> median pd, mean pd) over " << probes.size()
              << " held-out images" << std::endl;
    for (std::size_t i = 0; i < table.size(); ++i) {
      std::cout << "     " << fmt(table[i].amplitude, 2) << " -> " << fmt(table[i].median_pd) << ", "
                << fmt(table[i].mean_pd) << std::endl;
      if (i > 0) monotone = monotone && table[i].median_pd > table[i - 1].median_pd &&
                            table[i].mean_pd > table[i - 1].mean_pd;
    }
    const double calib_minutes = minutes_since(t);
    const double a1_total = a1_minutes + calib_minutes;
    verdict("A1", grads_ok && conv_err <= 1e-10 && monotone && a1_total <= 2.0, "numerical soundness",
            "worst gradient rel err " + fmt(worst, 3) + " (" + worst_name + ", limit 1e-4); conv forward err " +
                fmt(conv_err, 3) + " (limit 1e-10); calibration monotone: " + (monotone ? "yes" : "no") +
                "; " + fmt(a1_total, 3) + " min (limit 2)");

    t = Clock::now();
    run_cloak(cfg, opts);
    const double a2_minutes = train_minutes + minutes_since(t);
    {
      const json model = read_json(work / "model/manifest.json");
      const json cloak = read_json(work / "cloak/manifest.json");
      const double mse = model.at("holdout_mse_in_pretraining").get<double>();
      int n = 0, good = 0;
      for (const auto& img : cloak.at("images")) {
        ++n;
        if (img.at("constraint_satisfied").get<bool>() && img.at("latent_ratio").get<double>() <= 0.5) ++good;
      }
      const double frac = n ? double(good) / n : 0.0;
      verdict("A2", mse <= 0.01 && n == 30 && frac >= 0.9 && a2_minutes <= 15, "training and cloak contract",
              "held-out MSE " + fmt(mse) + " (limit 0.01); " + std::to_string(good) + "/" + std::to_string(n) +
                  " cloaks feasible with latent ratio <= 0.5 (need >= 90% of 30); " + fmt(a2_minutes, 3) +
                  " min (limit 15)");

      // Single-image regression at default settings toward the stroke preset.
      const Bench bench = standard_bench(default_styles(), 1, cfg.master_seed);
      const Image& x = bench.artist("historical_realist").train[0];
      const StyleParams& oil = find_style(bench.styles, "impasto").params;
      const OptResult r = glazelab::cloak(x, oil, ae, PerceptualMetric(ae), cfg.cloak);
      const Latent target = encode(ae, stylize(x, oil));
      const double before = latent_l2(encode(ae, x), target);
      const double after = latent_l2(encode(ae, r.output), target);
      check("stroke-target cloak", r.constraint_satisfied && after <= 0.5 * before,
            "latent distance " + fmt(after) + " vs uncloaked " + fmt(before) + " (need <= 50%); pd " +
                fmt(r.final_pd) + ", within budget: " + (r.constraint_satisfied ? "yes" : "no"));
    }

    // ---- reconstruction-gap separation -----------------------------------
    t = Clock::now();
    run_eval(cfg, Experiment::gap, opts);
    {
      const json gap = read_json(work / "eval/gap.json");
      const double d = gap.at("cohens_d").get<double>();
      const double minutes = minutes_since(t);
      const bool sizes = gap.at("n_clean") == 30 && gap.at("n_treated") == 30;
      verdict("A3", d >= 0.8 && sizes && minutes <= 5, "reconstruction-gap separation",
              "Cohen's d " + fmt(d) + " (need >= 0.8); mean gap clean " + fmt(gap.at("mean_clean").get<double>()) +
                  ", cloaked " + fmt(gap.at("mean_treated").get<double>()) + "; " + fmt(minutes, 3) +
                  " min (limit 5)");
    }

    // ---- purification contract -------------------------------------------
    t = Clock::now();
    run_purify(cfg, PurifySource::cloak, opts);
    run_eval(cfg, Experiment::gap, opts);
    {
      const json gap = read_json(work / "eval/gap.json");
      const json pur = read_json(work / "purify/cloak/manifest.json");
      int n = 0, ok = 0;
      for (const auto& img : pur.at("images")) {
        ++n;
        ok += img.at("constraint_satisfied").get<bool>();
      }
      const double ratio = gap.at("purified").at("mean_gap").get<double>() / gap.at("mean_clean").get<double>();
      const double frac = n ? double(ok) / n : 0.0;
      const double minutes = minutes_since(t);
      verdict("A4", ratio <= 1.2 && frac >= 0.9 && n == 30 && minutes <= 15, "purification contract",
              "purified mean gap / clean mean gap " + fmt(ratio) + " (limit 1.2); within budget " +
                  std::to_string(ok) + "/" + std::to_string(n) + " (need >= 90%); " + fmt(minutes, 3) +
                  " min (limit 15)");
    }

    // ---- genre accuracy under blur ------------------------------------------
    t = Clock::now();
    run_eval(cfg, Experiment::genre, opts);
    {
      const json g = read_json(work / "eval/genre.json");
      const double acc = g.at("holdout_accuracy").get<double>();
      const double blurred = g.at("blurred_accuracy").get<double>();
      const double retention = g.at("blurred_texture_retention_median").get<double>();
      const double minutes = minutes_since(t);
      verdict("A5", acc >= 0.95 && retention < 0.6 && blurred >= 0.9 && minutes <= 10,
              "genre accuracy ignores quality collapse",
              "holdout accuracy " + fmt(acc) + " (need >= 0.95); blurred texture retention median " +
                  fmt(retention) + " (need < 0.6); blurred accuracy " + fmt(blurred) + " (need >= 0.9); " +
                  fmt(minutes, 3) + " min (limit 10)");
    }

    // ---- clean-image texture damage -------------------------------------------
    t = Clock::now();
    run_purify(cfg, PurifySource::clean, opts);
    run_eval(cfg, Experiment::texture, opts);
    {
      const json e = read_json(work / "eval/texture.json");
      const Direction d = settle(
          e, "result",
          [](const json& r) {
            return r.at("texture_retention_median").get<double>() < 0.95 &&
                   r.at("mean_mimic_purified").get<double>() > r.at("mean_mimic_clean").get<double>();
          },
          [](const json& r) {
            return "retention median " + fmt(r.at("texture_retention_median").get<double>()) + ", mimic clean " +
                   fmt(r.at("mean_mimic_clean").get<double>()) + " vs purified " +
                   fmt(r.at("mean_mimic_purified").get<double>());
          });
      const double minutes = minutes_since(t);
      verdict("A6", d.pass && e.at("n") == 20 && minutes <= 10, "purification removes texture from clean images",
              d.detail + "; " + fmt(minutes, 3) + " min (limit 10)");
    }

    // ---- smooth-style weakness -------------------------------------------------
    t = Clock::now();
    run_eval(cfg, Experiment::smooth, opts);
    {
      const json e = read_json(work / "eval/smooth.json");
      const Direction d = settle(
          e, "result",
          [](const json& r) {
            return r.at("mean_normalized_smooth").get<double>() > r.at("mean_normalized_textured").get<double>();
          },
          [](const json& r) {
            return "normalized artifact smooth " + fmt(r.at("mean_normalized_smooth").get<double>()) +
                   " vs textured " + fmt(r.at("mean_normalized_textured").get<double>());
          });
      const double minutes = minutes_since(t);
      verdict("A7", d.pass && minutes <= 15, "smooth styles show more purification artifacts",
              d.detail + "; " + fmt(minutes, 3) + " min (limit 15)");
    }

    // ---- non-historical artists -------------------------------------------------
    t = Clock::now();
    run_eval(cfg, Experiment::mimic, opts);
    {
      const json e = read_json(work / "eval/mimic.json");
      const Direction d = settle(
          e, "groups",
          [](const json& r) {
            return r.at("mean_degradation_not_in_pretraining").get<double>() >
                   r.at("mean_degradation_in_pretraining").get<double>();
          },
          [](const json& r) {
            return "mimic degradation not-in-pretraining " +
                   fmt(r.at("mean_degradation_not_in_pretraining").get<double>()) + " vs in-pretraining " +
                   fmt(r.at("mean_degradation_in_pretraining").get<double>());
          });
      const double minutes = minutes_since(t);
      verdict("A8", d.pass && minutes <= 15, "mimicry degrades more for artists outside pretraining",
              d.detail + "; " + fmt(minutes, 3) + " min (limit 15)");

      // Per-artist directions the mimicry proxy must show regardless of A8.
      for (const auto& a : e.at("artists")) {
        const std::string name = a.at("artist");
        const double clean = a.at("clean").at("total").get<double>();
        const double cloaked = a.at("cloaked").at("total").get<double>();
        check("cloak disrupts mimicry of " + name,
              cloaked > clean &&
                  a.at("cloaked_to_target").get<double>() < a.at("clean_to_target").get<double>(),
              "score clean " + fmt(clean) + " -> cloaked " + fmt(cloaked) + "; distance to target style " +
                  fmt(a.at("clean_to_target").get<double>()) + " -> " +
                  fmt(a.at("cloaked_to_target").get<double>()));
        if (!a.at("in_pretraining").get<bool>()) {
          const double purified = a.at("purified").at("total").get<double>();
          check("residual damage after purification for " + name, purified > clean,
                "score clean " + fmt(clean) + " -> purified " + fmt(purified));
        }
      }
    }

    const std::string report_a = run_report(cfg, opts);

    // ---- reproducibility ----------------------------------------------------------
    t = Clock::now();
    fs::current_path(second);
    StageOptions opts_b = opts;
    opts_b.jobs = 2;
    const std::string report_b = run_all(cfg, opts_b);
    const fs::path work_b = second / cfg.workdir;
    {
      const std::string corpus_a = read_json(work / "data/manifest.json").at("corpus_hash");
      const std::string corpus_b = read_json(work_b / "data/manifest.json").at("corpus_hash");
      const std::string weights_a = sha256_file(work / "model/ae.nnw");
      const std::string weights_b = sha256_file(work_b / "model/ae.nnw");
      const double minutes = minutes_since(t);
      const bool same = corpus_a == corpus_b && weights_a == weights_b && report_a == report_b;
      verdict("A9", same && minutes <= 30, "bit-identical rerun",
              "corpus " + corpus_a.substr(0, 12) + (corpus_a == corpus_b ? " == " : " != ") + corpus_b.substr(0, 12) +
                  "; weights " + weights_a.substr(0, 12) + (weights_a == weights_b ? " == " : " != ") +
                  weights_b.substr(0, 12) + "; report " + report_a.substr(0, 12) +
                  (report_a == report_b ? " == " : " != ") + report_b.substr(0, 12) +
                  " (second run with 2 workers in another directory); " + fmt(minutes, 3) + " min (limit 30)");
    }
  } catch (const std::exception& e) {
    fs::current_path(start_dir);
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  fs::current_path(start_dir);
  std::cout << (failures == 0 ? "all criteria and checks passed"
                              : std::to_string(failures) + " criterion/check failure(s)")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
