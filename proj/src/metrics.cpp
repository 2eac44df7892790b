#include "kgnpro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kgnpro/error.hpp"
#include "kgnpro/textio.hpp"

namespace kgnpro {

namespace {

bool within(const Pose& pred, const Pose& gt, const SuccessThresholds& th,
            const PoseDistanceParams& params) {
  const double dt = translation_distance(pred, gt);
  const double dr =
      rotation_error(pred, gt, params.use_symmetry) * 180.0 / M_PI;
  return dt <= th.translation_m && dr <= th.rotation_deg;
}

}  // namespace

GraspSuccess grasp_success(const Pose& pred, const std::vector<Pose>& gts,
                           const SuccessThresholds& th,
                           const PoseDistanceParams& params) {
  GraspSuccess out;
  double best = 0.0;
  for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
    if (!within(pred, gts[j], th, params)) continue;
    const double d = pose_distance(pred, gts[j], params);
    if (!out.success || d < best) {
      out.success = true;
      out.matched_gt = j;
      best = d;
    }
  }
  return out;
}

EvalReport evaluate(const std::vector<std::vector<Pose>>& pred_sets,
                    const std::vector<std::vector<Pose>>& gt_sets,
                    const std::vector<SuccessThresholds>& grid,
                    const PoseDistanceParams& params) {
  if (pred_sets.size() != gt_sets.size())
    raise(ErrorCode::InvalidArgument,
          "evaluate: prediction/scene list length mismatch");

  EvalReport report;
  report.grid.resize(grid.size());
  for (size_t c = 0; c < grid.size(); ++c) report.grid[c].th = grid[c];
  report.per_scene.resize(pred_sets.size());

  for (size_t s = 0; s < pred_sets.size(); ++s) {
    const auto& preds = pred_sets[s];
    const auto& gts = gt_sets[s];
    report.per_scene[s].resize(grid.size());
    for (size_t c = 0; c < grid.size(); ++c) {
      ThresholdCell cell;
      cell.th = grid[c];
      cell.predictions = static_cast<long long>(preds.size());
      cell.gts = static_cast<long long>(gts.size());

      // One-to-one accounting: qualifying pairs consumed by ascending
      // pose_distance (ties by pred then gt index).
      struct Pair {
        double dist;
        int pred, gt;
      };
      std::vector<Pair> pairs;
      for (int i = 0; i < static_cast<int>(preds.size()); ++i)
        for (int j = 0; j < static_cast<int>(gts.size()); ++j)
          if (within(preds[i], gts[j], grid[c], params))
            pairs.push_back({pose_distance(preds[i], gts[j], params), i, j});
      std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.gt < b.gt;
      });
      std::vector<bool> pred_used(preds.size(), false);
      std::vector<bool> gt_used(gts.size(), false);
      for (const auto& pr : pairs) {
        if (pred_used[pr.pred] || gt_used[pr.gt]) continue;
        pred_used[pr.pred] = true;
        gt_used[pr.gt] = true;
        ++cell.successes;
      }
      // Coverage: a GT counts as covered if any prediction qualifies.
      for (int j = 0; j < static_cast<int>(gts.size()); ++j) {
        for (int i = 0; i < static_cast<int>(preds.size()); ++i) {
          if (within(preds[i], gts[j], grid[c], params)) {
            ++cell.covered_gts;
            break;
          }
        }
      }

      report.per_scene[s][c] = cell;
      report.grid[c].predictions += cell.predictions;
      report.grid[c].successes += cell.successes;
      report.grid[c].gts += cell.gts;
      report.grid[c].covered_gts += cell.covered_gts;
    }
  }
  return report;
}

std::vector<SuccessThresholds> default_threshold_grid() {
  std::vector<SuccessThresholds> grid;
  for (double deg : {10.0, 20.0, 45.0})
    for (double cm : {1.0, 1.5, 2.0, 5.0})
      grid.push_back({cm / 100.0, deg});
  return grid;
}

void emit_report(const EvalReport& r, const std::string& base_path) {
  std::ostringstream csv;
  csv << "translation_m,rotation_deg,predictions,successes,success_rate,"
         "gts,covered_gts,coverage_rate\n";
  for (const auto& cell : r.grid) {
    csv << format_double(cell.th.translation_m) << ','
        << format_double(cell.th.rotation_deg) << ',' << cell.predictions
        << ',' << cell.successes << ',' << format_double(cell.success_rate())
        << ',' << cell.gts << ',' << cell.covered_gts << ','
        << format_double(cell.coverage_rate()) << '\n';
  }
  write_file(base_path + ".csv", csv.str());

  std::ostringstream txt;
  txt << "Grasp evaluation (" << r.per_scene.size() << " scenes)\n\n";
  txt << "  trans    rot    success rate          coverage rate\n";
  char line[160];
  for (const auto& cell : r.grid) {
    std::snprintf(line, sizeof(line),
                  "  %4.1f cm  %4.1f deg  %6.2f %% (%lld/%lld)   %6.2f %% (%lld/%lld)\n",
                  cell.th.translation_m * 100.0, cell.th.rotation_deg,
                  cell.success_rate() * 100.0, cell.successes,
                  cell.predictions, cell.coverage_rate() * 100.0,
                  cell.covered_gts, cell.gts);
    txt << line;
  }
  txt << "\nReference success rates, KGN-Pro as published (CNN pipeline, "
         "real renders; paper-reported, CNN-dependent, not reproduced "
         "here):\n";
  txt << "  10 deg single-object: 93.4 / 96.5 / 98.5 %  (1.0 / 1.5 / 2.0 cm)\n";
  txt << "  10 deg multi-object:  90.9 / 93.9 / 96.9 %  (1.0 / 1.5 / 2.0 cm)\n";
  txt << "  20 deg single-object: 99.1 / 99.5 / 100.0 % (1.0 / 1.5 / 2.0 cm)\n";
  txt << "  20 deg multi-object:  95.2 / 97.5 / 98.1 %  (1.0 / 1.5 / 2.0 cm)\n";
  write_file(base_path + ".txt", txt.str());
}

std::vector<SuccessThresholds> parse_threshold_grid(const std::string& text) {
  std::vector<SuccessThresholds> out;
  for (const auto& part : split_char(text, ',')) {
    if (part.empty()) continue;
    const auto pair = split_char(part, ':');
    if (pair.size() != 2)
      raise(ErrorCode::ParseError,
            "threshold entry must be 'cm:deg', got '" + part + "'");
    out.push_back({parse_double(pair[0], "threshold cm") / 100.0,
                   parse_double(pair[1], "threshold deg")});
  }
  if (out.empty())
    raise(ErrorCode::ParseError, "empty threshold grid: '" + text + "'");
  return out;
}

}  // namespace kgnpro
