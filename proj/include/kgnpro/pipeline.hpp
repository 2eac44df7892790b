#pragma once

#include <string>
#include <vector>

#include "kgnpro/config.hpp"

namespace kgnpro {

// One solved grasp, as written to pose files (one grasp per line:
// scene id, grasp id, quaternion w x y z, translation, score, cost).
struct PoseRecord {
  std::string scene_id;
  int grasp_id = 0;
  Pose pose;
  double score = 0.0;
  double cost = 0.0;
};

void save_poses(const std::vector<PoseRecord>& records,
                const std::string& path);
std::vector<PoseRecord> load_poses(const std::string& path);

struct GenSummary {
  long long scenes = 0;
  long long grasps = 0;
};

GenSummary run_gen(const RunConfig& cfg, int num, const std::string& out_dir);

struct SolveSummary {
  long long scenes = 0;
  long long grasps = 0;
  long long failed_scenes = 0;
  double median_trans_err_m = 0.0;
  double median_rot_err_deg = 0.0;
  std::string log;
};

// Writes <stem>.poses.txt per scene into out_dir. Per-scene failures are
// recorded in the summary (and its log) without stopping the run.
SolveSummary run_solve(const RunConfig& cfg, const std::string& scenes_dir,
                       const std::string& out_dir);

struct TrainSummary {
  long long iterations = 0;
  double final_total = 0.0;
  double final_median_err_cm = 0.0;
  double final_median_err_deg = 0.0;
  bool aborted = false;
};

TrainSummary run_train_toy(const RunConfig& cfg, const std::string& scenes_dir,
                           const std::string& log_csv);

struct GradcheckSummary {
  long long coords_total = 0;
  long long coords_failed = 0;  // relative error >= 1e-3
  double max_rel_error = 0.0;
  double frac_ok = 1.0;
};

// Seeded random configurations (4-12 correspondences, mixed noise); analytic
// gradients against central finite differences of the loss on the same
// frozen sample set. Writes per-coordinate CSV when csv_path is non-empty.
GradcheckSummary run_gradcheck(const RunConfig& cfg, int trials,
                               const std::string& csv_path);

EvalReport run_eval(const RunConfig& cfg, const std::string& pred_dir,
                    const std::string& scenes_dir,
                    const std::string& out_base);

struct SelftestResult {
  int run = 0;
  int failed = 0;
  std::string report;  // one line per check
};

// Fixed battery of analytic fixture checks across all modules.
SelftestResult run_selftest();

}  // namespace kgnpro
