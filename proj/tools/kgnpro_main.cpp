// kgnpro command line front end. Parses flags, forwards everything to the
// shared library through its C interface, prints summaries.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kgnpro/kgnpro.h"

namespace {

struct SessionDeleter {
  void operator()(kgnpro_session* s) const { kgnpro_session_destroy(s); }
};
using SessionPtr = std::unique_ptr<kgnpro_session, SessionDeleter>;

int fail(kgnpro_session* s, kgnpro_status st) {
  std::fprintf(stderr, "error: %s (status %d)\n", kgnpro_last_error(s),
               static_cast<int>(st));
  return 1;
}

bool apply_option(kgnpro_session* s, const std::string& key,
                  const std::string& value) {
  const kgnpro_status st = kgnpro_set_option(s, key.c_str(), value.c_str());
  if (st != KGNPRO_OK) {
    std::fprintf(stderr, "error: %s\n", kgnpro_last_error(s));
    return false;
  }
  return true;
}

void print_config(kgnpro_session* s) {
  uint64_t needed = 0;
  kgnpro_describe_config(s, nullptr, 0, &needed);
  std::string buf(needed, '\0');
  kgnpro_describe_config(s, buf.data(), needed, nullptr);
  std::fputs(buf.c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kgnpro: keypoint-based grasp pose estimation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "key=value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "master random seed");
  app.add_flag("--verbose", verbose, "print the resolved configuration");

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
  std::uint64_t gen_num = 10;
  int gen_objects = 1;
  std::string gen_out, gen_categories;
  gen->add_option("--num", gen_num, "number of scenes");
  gen->add_option("--objects", gen_objects, "objects per scene");
  gen->add_option("--categories", gen_categories,
                  "comma-separated category names (default: all)");
  gen->add_option("--out-dir,-o", gen_out, "output directory")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "solve grasp poses per scene");
  std::string solve_scenes, solve_out;
  double noise_px = -1.0, outlier_frac = -1.0, outlier_px = -1.0;
  bool use_map_codec = false;
  solve->add_option("--scenes-dir", solve_scenes, "scene directory")->required();
  solve->add_option("--out-dir,-o", solve_out, "pose file directory")->required();
  solve->add_option("--noise-px", noise_px, "keypoint noise sigma, pixels");
  solve->add_option("--outlier-frac", outlier_frac, "outlier fraction per grasp");
  solve->add_option("--outlier-px", outlier_px, "outlier offset, pixels");
  solve->add_flag("--use-map-codec", use_map_codec,
                  "route observations through the keypoint-map codec");

  // train-toy
  auto* train = app.add_subcommand("train-toy",
                                   "optimize a parametric predictor");
  std::string train_scenes, train_csv;
  int train_iters = -1;
  double lr_px = -1.0, lr_logit = -1.0, lambda_kl = -1.0, perturb_px = -1.0;
  train->add_option("--scenes-dir", train_scenes, "scene directory")->required();
  train->add_option("--iters", train_iters, "iterations");
  train->add_option("--lr-px", lr_px, "keypoint learning rate");
  train->add_option("--lr-logit", lr_logit, "confidence logit learning rate");
  train->add_option("--lambda-kl", lambda_kl, "pose loss weight");
  train->add_option("--perturb-px", perturb_px,
                    "initialize keypoints this far from ground truth");
  train->add_option("--log-csv", train_csv, "per-iteration CSV path");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "analytic vs numeric pose-loss gradients");
  std::uint64_t gc_trials = 100;
  std::string gc_out;
  gradcheck->add_option("--trials", gc_trials, "number of configurations");
  gradcheck->add_option("--out,-o", gc_out, "per-coordinate CSV path");

  // eval
  auto* eval = app.add_subcommand("eval", "grasp success / coverage metrics");
  std::string eval_pred, eval_scenes, eval_out, eval_thresholds;
  eval->add_option("--pred-dir", eval_pred, "predicted pose directory")->required();
  eval->add_option("--scenes-dir", eval_scenes, "scene directory")->required();
  eval->add_option("--thresholds", eval_thresholds,
                   "grid as cm:deg pairs, e.g. 1.0:10,1.5:10");
  eval->add_option("--out,-o", eval_out, "report base path")->required();

  auto* selftest =
      app.add_subcommand("selftest", "run the built-in fixture checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and a close-match suggestion
    return 2;
  }

  kgnpro_session* raw = nullptr;
  if (kgnpro_session_create(&raw) != KGNPRO_OK || !raw) {
    std::fprintf(stderr, "error: cannot create session\n");
    return 1;
  }
  SessionPtr session(raw);
  kgnpro_session* s = session.get();

  if (!config_path.empty()) {
    const kgnpro_status st = kgnpro_load_config(s, config_path.c_str());
    if (st != KGNPRO_OK) return fail(s, st);
  }
  if (seed_opt->count() && !apply_option(s, "seed", std::to_string(seed)))
    return 2;

  if (*gen) {
    if (!apply_option(s, "scene.n_objects", std::to_string(gen_objects)))
      return 2;
    if (!gen_categories.empty() &&
        !apply_option(s, "scene.categories", gen_categories))
      return 2;
    if (verbose) print_config(s);
    kgnpro_gen_summary sum{};
    const kgnpro_status st = kgnpro_gen(s, gen_num, gen_out.c_str(), &sum);
    if (st != KGNPRO_OK) return fail(s, st);
    std::printf("gen: %llu scenes, %llu grasps -> %s\n",
                static_cast<unsigned long long>(sum.scenes),
                static_cast<unsigned long long>(sum.grasps), gen_out.c_str());
    return 0;
  }

  if (*solve) {
    if (noise_px >= 0.0 &&
        !apply_option(s, "noise.sigma_px", std::to_string(noise_px)))
      return 2;
    if (outlier_frac >= 0.0 &&
        !apply_option(s, "noise.outlier_fraction", std::to_string(outlier_frac)))
      return 2;
    if (outlier_px >= 0.0 &&
        !apply_option(s, "noise.outlier_px", std::to_string(outlier_px)))
      return 2;
    if (use_map_codec && !apply_option(s, "solve.use_map_codec", "true"))
      return 2;
    if (verbose) print_config(s);
    kgnpro_solve_summary sum{};
    const kgnpro_status st =
        kgnpro_solve(s, solve_scenes.c_str(), solve_out.c_str(), &sum);
    if (st != KGNPRO_OK) return fail(s, st);
    std::fputs(kgnpro_last_report(s), stderr);
    std::printf("solve: %llu scenes (%llu failed), %llu grasps, median error "
                "%.4g m / %.4g deg\n",
                static_cast<unsigned long long>(sum.scenes),
                static_cast<unsigned long long>(sum.failed_scenes),
                static_cast<unsigned long long>(sum.grasps),
                sum.median_trans_err_m, sum.median_rot_err_deg);
    return sum.failed_scenes == 0 ? 0 : 1;
  }

  if (*train) {
    if (train_iters >= 0 &&
        !apply_option(s, "optim.iters", std::to_string(train_iters)))
      return 2;
    if (lr_px >= 0.0 && !apply_option(s, "optim.lr_px", std::to_string(lr_px)))
      return 2;
    if (lr_logit >= 0.0 &&
        !apply_option(s, "optim.lr_logit", std::to_string(lr_logit)))
      return 2;
    if (lambda_kl >= 0.0 &&
        !apply_option(s, "loss.lambda_kl", std::to_string(lambda_kl)))
      return 2;
    if (perturb_px >= 0.0 &&
        !apply_option(s, "optim.init_perturb_px", std::to_string(perturb_px)))
      return 2;
    if (verbose) print_config(s);
    kgnpro_train_summary sum{};
    const kgnpro_status st = kgnpro_train_toy(
        s, train_scenes.c_str(), train_csv.empty() ? nullptr : train_csv.c_str(),
        &sum);
    if (st != KGNPRO_OK) return fail(s, st);
    std::printf("train-toy: %llu iterations%s, loss %.6g, median pose error "
                "%.4g cm / %.4g deg\n",
                static_cast<unsigned long long>(sum.iterations),
                sum.aborted ? " (aborted on non-finite loss)" : "",
                sum.final_total_loss, sum.final_median_err_cm,
                sum.final_median_err_deg);
    return sum.aborted ? 1 : 0;
  }

  if (*gradcheck) {
    if (verbose) print_config(s);
    kgnpro_gradcheck_summary sum{};
    const kgnpro_status st = kgnpro_gradcheck(
        s, gc_trials, gc_out.empty() ? nullptr : gc_out.c_str(), &sum);
    if (st != KGNPRO_OK) return fail(s, st);
    std::printf("gradcheck: %llu coordinates, %llu above 1e-3, max rel error "
                "%.3g\n",
                static_cast<unsigned long long>(sum.coords_total),
                static_cast<unsigned long long>(sum.coords_failed),
                sum.max_rel_error);
    return sum.coords_failed == 0 ? 0 : 1;
  }

  if (*eval) {
    if (!eval_thresholds.empty() &&
        !apply_option(s, "eval.thresholds", eval_thresholds))
      return 2;
    if (verbose) print_config(s);
    const kgnpro_status st =
        kgnpro_eval(s, eval_pred.c_str(), eval_scenes.c_str(), eval_out.c_str());
    if (st != KGNPRO_OK) return fail(s, st);
    std::printf("eval: wrote %s.csv and %s.txt\n", eval_out.c_str(),
                eval_out.c_str());
    return 0;
  }

  if (*selftest) {
    kgnpro_selftest_summary sum{};
    const kgnpro_status st = kgnpro_selftest(s, &sum);
    std::fputs(kgnpro_last_report(s), stdout);
    std::printf("selftest: %llu checks, %llu failed\n",
                static_cast<unsigned long long>(sum.checks_run),
                static_cast<unsigned long long>(sum.checks_failed));
    return st == KGNPRO_OK ? 0 : 1;
  }

  return 2;
}
