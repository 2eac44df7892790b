#include "kgnpro/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>

#include "kgnpro/error.hpp"
#include "kgnpro/textio.hpp"

namespace kgnpro {

namespace fs = std::filesystem;

namespace {

// Single writer per output directory.
class LockFile {
 public:
  explicit LockFile(const std::string& dir) : path_(dir + "/.kgnpro.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      raise(ErrorCode::IoError,
            "output directory is locked by another run: " + path_);
    std::fclose(f);
  }
  ~LockFile() { std::remove(path_.c_str()); }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
};

std::string file_stem(const std::string& path) {
  std::string stem = fs::path(path).filename().string();
  const auto dot = stem.find('.');
  return dot == std::string::npos ? stem : stem.substr(0, dot);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void save_poses(const std::vector<PoseRecord>& records,
                const std::string& path) {
  std::ostringstream os;
  for (const auto& r : records) {
    os << r.scene_id << ' ' << r.grasp_id << ' '
       << format_double(r.pose.rotation.w()) << ' '
       << format_double(r.pose.rotation.x()) << ' '
       << format_double(r.pose.rotation.y()) << ' '
       << format_double(r.pose.rotation.z()) << ' '
       << format_double(r.pose.translation.x()) << ' '
       << format_double(r.pose.translation.y()) << ' '
       << format_double(r.pose.translation.z()) << ' '
       << format_double(r.score) << ' ' << format_double(r.cost) << '\n';
  }
  write_file(path, os.str());
}

std::vector<PoseRecord> load_poses(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  std::vector<PoseRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string at = " at line " + std::to_string(line_no) + " of " + path;
    if (tok.size() != 11)
      raise(ErrorCode::ParseError, "pose line needs 11 fields" + at);
    PoseRecord r;
    r.scene_id = tok[0];
    r.grasp_id = static_cast<int>(parse_int(tok[1], "grasp id" + at));
    r.pose.rotation = Eigen::Quaterniond(parse_double(tok[2], "qw" + at),
                                         parse_double(tok[3], "qx" + at),
                                         parse_double(tok[4], "qy" + at),
                                         parse_double(tok[5], "qz" + at));
    r.pose.translation = {parse_double(tok[6], "tx" + at),
                          parse_double(tok[7], "ty" + at),
                          parse_double(tok[8], "tz" + at)};
    r.score = parse_double(tok[9], "score" + at);
    r.cost = parse_double(tok[10], "cost" + at);
    out.push_back(r);
  }
  return out;
}

GenSummary run_gen(const RunConfig& cfg, int num, const std::string& out_dir) {
  if (num < 1) raise(ErrorCode::InvalidArgument, "gen: num must be >= 1");
  LockFile lock(out_dir);
  GenSummary sum;
  SeededRng base(cfg.seed);
  for (int i = 0; i < num; ++i) {
    const Scene scene =
        sample_scene(cfg.scene, base.derive(static_cast<std::uint64_t>(i)).seed());
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%04d.txt", i);
    save_scene(scene, out_dir + "/" + name);
    ++sum.scenes;
    sum.grasps += static_cast<long long>(scene.grasps.size());
  }
  return sum;
}

SolveSummary run_solve(const RunConfig& cfg, const std::string& scenes_dir,
                       const std::string& out_dir) {
  const auto files = list_files(scenes_dir, ".txt");
  if (files.empty())
    raise(ErrorCode::IoError, "no scene files in " + scenes_dir);
  LockFile lock(out_dir);

  SolveSummary sum;
  std::vector<double> errs_t, errs_r;
  std::ostringstream log;
  SeededRng base(cfg.seed);

  for (size_t si = 0; si < files.size(); ++si) {
    const std::string stem = file_stem(files[si]);
    try {
      const Scene scene = load_scene(files[si]);
      SeededRng rng = base.derive(si);
      std::vector<PoseRecord> records;

      if (cfg.use_map_codec) {
        std::vector<Pose> cam_poses;
        for (int g = 0; g < static_cast<int>(scene.grasps.size()); ++g)
          cam_poses.push_back(grasp_pose_cam(scene, g));
        const EncodeResult enc = encode_grasps(
            cam_poses, scene.intrinsics, cfg.scene.gripper, cfg.codec_stride);
        const auto dets =
            decode_keypoints(enc.map, cfg.codec_threshold, cfg.codec_top_k);
        const auto corners = cfg.scene.gripper.corners();
        for (int d = 0; d < static_cast<int>(dets.size()); ++d) {
          CorrespondenceSet x;
          x.intrinsics = scene.intrinsics;
          double score = 0.0;
          for (int i = 0; i < 4; ++i) {
            x.items.push_back(
                {dets[d].keypoints[i], corners[i], dets[d].weights[i]});
            score += 0.25 * 0.5 * (dets[d].weights[i].x() + dets[d].weights[i].y());
          }
          SeededRng stream = rng.derive(static_cast<std::uint64_t>(d));
          const SolveReport rep = multi_start_solve(x, cfg.solver, stream);
          records.push_back({stem, d, rep.pose, score, rep.cost});
        }
      } else {
        SeededRng obs_rng = rng.derive(0);
        const auto obs = observe_scene(scene, cfg.noise, obs_rng);
        for (const auto& ob : obs) {
          double score = 0.0;
          for (const auto& item : ob.x.items)
            score += 0.125 * (item.w2d.x() + item.w2d.y());
          SeededRng stream = rng.derive(1000 + static_cast<std::uint64_t>(ob.grasp_index));
          const SolveReport rep = multi_start_solve(ob.x, cfg.solver, stream);
          records.push_back({stem, ob.grasp_index, rep.pose, score, rep.cost});
          errs_t.push_back(translation_distance(rep.pose, ob.gt_pose_cam));
          errs_r.push_back(rotation_error(rep.pose, ob.gt_pose_cam,
                                          cfg.match.use_symmetry) *
                           180.0 / M_PI);
        }
      }

      // Rank: confidence first, reprojection cost second.
      std::stable_sort(records.begin(), records.end(),
                       [](const PoseRecord& a, const PoseRecord& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.cost < b.cost;
                       });
      save_poses(records, out_dir + "/" + stem + ".poses.txt");
      ++sum.scenes;
      sum.grasps += static_cast<long long>(records.size());
    } catch (const Error& e) {
      ++sum.failed_scenes;
      log << "scene " << stem << " failed: " << e.what() << '\n';
    }
  }
  sum.median_trans_err_m = median_of(errs_t);
  sum.median_rot_err_deg = median_of(errs_r);
  sum.log = log.str();
  return sum;
}

TrainSummary run_train_toy(const RunConfig& cfg, const std::string& scenes_dir,
                           const std::string& log_csv) {
  const auto files = list_files(scenes_dir, ".txt");
  if (files.empty())
    raise(ErrorCode::IoError, "no scene files in " + scenes_dir);

  std::vector<Scene> scenes;
  for (const auto& f : files) scenes.push_back(load_scene(f));

  SeededRng rng(cfg.seed);
  std::vector<ParametricPredictor> predictors;
  for (size_t s = 0; s < scenes.size(); ++s) {
    SeededRng stream = rng.derive(s);
    if (cfg.optim_init_perturb_px > 0.0) {
      predictors.push_back(
          predictor_from_scene(scenes[s], cfg.optim_init_perturb_px, stream));
    } else {
      const auto obs = observe_scene(scenes[s], cfg.noise, stream);
      predictors.push_back(predictor_from_observations(obs));
    }
  }

  TrainerConfig tcfg;
  tcfg.kl = {cfg.solver, cfg.mc};
  tcfg.match = cfg.match;
  tcfg.gripper = cfg.scene.gripper;
  tcfg.stride = cfg.codec_stride;

  const TrainingReport report = train_toy(scenes, std::move(predictors),
                                          cfg.loss, cfg.optim, tcfg,
                                          rng.derive(0xFEED));
  if (!log_csv.empty()) write_file(log_csv, training_csv(report));

  TrainSummary sum;
  sum.iterations = static_cast<long long>(report.rows.size());
  sum.aborted = report.aborted;
  if (!report.rows.empty()) {
    const TrainRow& last = report.rows.back();
    sum.final_total = last.total;
    sum.final_median_err_cm = last.median_err_cm;
    sum.final_median_err_deg = last.median_err_deg;
  }
  return sum;
}

GradcheckSummary run_gradcheck(const RunConfig& cfg, int trials,
                               const std::string& csv_path) {
  if (trials < 1) raise(ErrorCode::InvalidArgument, "gradcheck: trials < 1");
  GradcheckSummary sum;
  std::ostringstream csv;
  csv << "trial,analytic,numeric,rel_error\n";

  SeededRng base(cfg.seed);
  GripperModel gripper = cfg.scene.gripper;

  for (int t = 0; t < trials; ++t) {
    SeededRng rng = base.derive(static_cast<std::uint64_t>(t));

    // Random configuration: 4-12 correspondences, mixed noise and weights.
    const int n = rng.uniform_int(4, 12);
    Pose gt;
    gt.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(
        rng.uniform(0.0, 60.0 * M_PI / 180.0), rng.unit_vector()));
    gt.translation = {rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15),
                      rng.uniform(0.45, 0.8)};
    const double sigma = std::array<double, 3>{0.0, 0.5, 2.0}[static_cast<size_t>(
        rng.uniform_int(0, 2))];
    const bool with_outlier = rng.uniform() < 0.3;

    CorrespondenceSet x;
    x.intrinsics = cfg.scene.intrinsics;
    const auto corners = gripper.corners();
    for (int i = 0; i < n; ++i) {
      Correspondence c;
      c.p3d = i < 4 ? corners[static_cast<size_t>(i)]
                    : Vector3d(rng.uniform(-0.04, 0.04),
                               rng.uniform(-0.04, 0.04),
                               rng.uniform(-0.04, 0.04));
      c.p2d = project(x.intrinsics, gt.apply(c.p3d)) +
              sigma * Vector2d(rng.normal(), rng.normal());
      if (with_outlier && i == 0) c.p2d += Vector2d(10.0, -7.0);
      c.w2d = {rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5)};
      x.items.push_back(c);
    }

    // Mode + frozen samples once; both the analytic gradient and the
    // numerical probe differentiate the same fixed-sample estimator.
    SeededRng solve_rng = rng.derive(1);
    const SolveReport mode = multi_start_solve(x, cfg.solver, solve_rng);
    SeededRng mc_rng = rng.derive(2);
    const MCSampleSet set = amis_sample(x, mode, cfg.mc, mc_rng);

    std::vector<Vector2d> d_p2d, d_w2d;
    kl_grad_on_samples(set, x, gt, d_p2d, d_w2d);

    const auto probe = [&](std::function<double&(CorrespondenceSet&)> pick,
                           double h, double analytic) {
      CorrespondenceSet xp = x;
      pick(xp) += h;
      const double up = kl_value_on_samples(set, xp, gt);
      CorrespondenceSet xm = x;
      pick(xm) -= h;
      const double dn = kl_value_on_samples(set, xm, gt);
      const double numeric = (up - dn) / (2.0 * h);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      double rel = std::abs(analytic - numeric) / denom;
      if (std::abs(analytic - numeric) <= 1e-9) rel = 0.0;
      csv << t << ',' << format_double(analytic) << ','
          << format_double(numeric) << ',' << format_double(rel) << '\n';
      ++sum.coords_total;
      if (!(rel < 1e-3)) ++sum.coords_failed;
      sum.max_rel_error = std::max(sum.max_rel_error, rel);
    };

    for (int i = 0; i < n; ++i) {
      for (int axis = 0; axis < 2; ++axis) {
        probe([i, axis](CorrespondenceSet& s) -> double& {
          return s.items[static_cast<size_t>(i)].p2d[axis];
        }, 1e-4, d_p2d[static_cast<size_t>(i)][axis]);
        probe([i, axis](CorrespondenceSet& s) -> double& {
          return s.items[static_cast<size_t>(i)].w2d[axis];
        }, 1e-5, d_w2d[static_cast<size_t>(i)][axis]);
      }
    }
  }

  sum.frac_ok = sum.coords_total
                    ? 1.0 - static_cast<double>(sum.coords_failed) /
                                static_cast<double>(sum.coords_total)
                    : 1.0;
  if (!csv_path.empty()) write_file(csv_path, csv.str());
  return sum;
}

EvalReport run_eval(const RunConfig& cfg, const std::string& pred_dir,
                    const std::string& scenes_dir,
                    const std::string& out_base) {
  const auto files = list_files(scenes_dir, ".txt");
  if (files.empty())
    raise(ErrorCode::IoError, "no scene files in " + scenes_dir);

  std::vector<std::vector<Pose>> preds, gts;
  for (const auto& f : files) {
    const Scene scene = load_scene(f);
    const std::string stem = file_stem(f);
    const std::string pose_path = pred_dir + "/" + stem + ".poses.txt";
    if (!fs::exists(pose_path))
      raise(ErrorCode::IoError,
            "missing predictions for scene " + stem + ": " + pose_path);
    std::vector<Pose> scene_preds;
    for (const auto& r : load_poses(pose_path)) scene_preds.push_back(r.pose);
    std::vector<Pose> scene_gts;
    for (int g = 0; g < static_cast<int>(scene.grasps.size()); ++g)
      scene_gts.push_back(grasp_pose_cam(scene, g));
    preds.push_back(std::move(scene_preds));
    gts.push_back(std::move(scene_gts));
  }

  const EvalReport report = evaluate(preds, gts, cfg.thresholds, cfg.match);
  if (!out_base.empty()) emit_report(report, out_base);
  return report;
}

SelftestResult run_selftest() {
  SelftestResult res;
  std::ostringstream report;
  const auto check = [&](const std::string& name, bool ok) {
    ++res.run;
    if (!ok) ++res.failed;
    report << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
  };
  const auto throws = [](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error&) {
      return true;
    }
    return false;
  };

  SeededRng rng(7);
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.8, rng.unit_vector()));
  p.translation = {0.1, -0.2, 0.3};

  check("compose: identity o p == p",
        rotation_angle(pose_compose(Pose::identity(), p), p) < 1e-12 &&
            translation_distance(pose_compose(Pose::identity(), p), p) < 1e-12);
  const Pose pinv = pose_compose(p, pose_inverse(p));
  check("compose: p o inv(p) == identity",
        rotation_angle(pinv, Pose::identity()) < 1e-9 &&
            pinv.translation.norm() < 1e-9);
  Pose tz;
  tz.translation = {0.0, 0.0, 0.5};
  check("inverse of pure translation",
        (pose_inverse(tz).translation - Vector3d(0.0, 0.0, -0.5)).norm() <
            1e-15);
  check("se3_exp of zero twist is identity",
        se3_exp(Twist{}).translation.norm() < 1e-15 &&
            rotation_angle(se3_exp(Twist{}), Pose::identity()) < 1e-15);
  {
    Twist t;
    t.rotation = {0.0, 0.0, M_PI / 2.0};
    const Pose q = se3_exp(t);
    const Vector3d v = q.apply(Vector3d(1.0, 0.0, 0.0));
    check("se3_exp quarter turn about z",
          (v - Vector3d(0.0, 1.0, 0.0)).norm() < 1e-12 &&
              q.translation.norm() < 1e-15);
  }
  {
    CameraIntrinsics k;
    k.fx = k.fy = 100.0;
    k.cx = k.cy = 0.0;
    check("project pinhole formula",
          (project(k, {0.1, 0.0, 1.0}) - Vector2d(10.0, 0.0)).norm() < 1e-12);
    CameraIntrinsics kd;
    check("project optical axis hits principal point",
          (project(kd, {0.0, 0.0, 0.37}) - Vector2d(kd.cx, kd.cy)).norm() <
              1e-12);
    check("project rejects z = 0",
          throws([&] { project(k, {0.0, 0.0, 0.0}); }));
  }
  {
    CorrespondenceSet x;
    x.intrinsics = CameraIntrinsics{};
    GripperModel g;
    Pose y;
    y.translation = {0.0, 0.0, 0.5};
    for (const auto& c : g.corners())
      x.items.push_back({project(x.intrinsics, y.apply(c)), c, {1.0, 1.0}});
    check("reprojection residual vanishes at the generating pose",
          reproj_error(x.items[0], x.intrinsics, y).norm() < 1e-12);
    Correspondence shifted = x.items[0];
    shifted.p2d += Vector2d(3.0, -4.0);
    check("residual sign convention (projected - observed)",
          (reproj_error(shifted, x.intrinsics, y) - Vector2d(-3.0, 4.0))
                  .norm() < 1e-12);
    CorrespondenceSet zeroed = x;
    for (auto& c : zeroed.items) c.w2d.setZero();
    check("weighted cost with zero weights is zero",
          weighted_cost(zeroed, y) == 0.0);
    CorrespondenceSet one;
    one.intrinsics = x.intrinsics;
    one.items.push_back(x.items[0]);
    one.items[0].p2d += Vector2d(1.0, 1.0);
    check("weighted cost of unit residual pair is 1",
          std::abs(weighted_cost(one, y) - 1.0) < 1e-9);
    const SolveReport rep = solve_pnp(x, y, SolverConfig{});
    check("solve from ground truth converges immediately",
          rep.converged && rep.iterations <= 2 && rep.cost < 1e-16);
  }
  {
    MCSampleSet s;
    McSample a;
    a.log_v = 0.0;
    a.v = 1.0;
    s.samples.push_back(a);
    check("l_pred of single unit weight is 0", std::abs(l_pred(s)) < 1e-12);
    McSample b;
    b.log_v = std::log(3.0);
    b.v = 3.0;
    s.samples.push_back(b);
    check("l_pred of weights (1,3) is log 2",
          std::abs(l_pred(s) - std::log(2.0)) < 1e-12);
  }
  {
    KeypointMap m = KeypointMap::zeros(640, 480, 4);
    m.h_at(10, 12) = 1.0;
    m.s_at(10, 12) = Vector2d(0.3, 0.4);
    m.o_at(10, 12, 0) = Vector2d(5.0, -2.0);
    const auto dets = decode_keypoints(m, 0.3, 100);
    check("decode arithmetic example",
          dets.size() == 1 &&
              (dets[0].keypoints[0] - Vector2d(45.3, 46.4)).norm() < 1e-12);
    KeypointMap flat = KeypointMap::zeros(640, 480, 4);
    check("decode of empty heatmap is empty",
          decode_keypoints(flat, 0.3, 100).empty());
    check("decode with threshold above max is empty",
          decode_keypoints(m, 1.5, 100).empty());
  }
  {
    std::vector<double> gt(16, 0.0);
    gt[5] = 1.0;
    std::vector<double> pred(16, 1e-6);
    pred[5] = 1.0 - 1e-6;
    const double l = focal_loss(pred, gt);
    check("focal loss of clamped-perfect prediction", l >= 0.0 && l < 1e-4);
    std::vector<double> mid(16, 0.5);
    check("focal loss nonnegative", focal_loss(mid, gt) >= 0.0);
  }
  {
    std::vector<double> pred = {3.0, -1.0, 7.0, 7.0};
    std::vector<double> gt = {0.0, 0.0, 0.0, 0.0};
    check("l1 offset loss over one masked cell",
          std::abs(l1_offset_loss(pred, gt, {0}, 2) - 2.0) < 1e-12);
    check("l1 offset loss ignores unmasked cells",
          std::abs(l1_offset_loss(pred, gt, {0}, 2) -
                   l1_offset_loss({3.0, -1.0, 0.0, 0.0}, gt, {0}, 2)) <
              1e-12);
    check("l1 offset loss of exact prediction is 0",
          l1_offset_loss(gt, gt, {0, 1}, 2) == 0.0);
  }
  {
    PoseDistanceParams params;
    check("pose distance of identical poses is 0",
          pose_distance(p, p, params) == 0.0);
    Pose a, b;
    b.translation = {0.0, 0.02, 0.0};
    check("pose distance of 2 cm offset",
          std::abs(pose_distance(a, b, params) - 0.02) < 1e-12);
    Pose c;
    c.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.1, Vector3d::UnitX()));
    check("pose distance of 0.1 rad at rho 0.05",
          std::abs(pose_distance(a, c, params) - 0.005) < 1e-9);
    const MatchResult mr = nn_match({a}, {a}, params);
    check("nn_match pairs identical pose at distance 0",
          mr.assignments.size() == 1 && mr.assignments[0].dist == 0.0);
  }
  {
    Pose gt0;
    Pose off;
    off.translation = {0.012, 0.0, 0.0};
    PoseDistanceParams params;
    check("success: exact pose matches any thresholds",
          grasp_success(gt0, {gt0}, {0.01, 10.0}, params).success);
    check("success: 1.2 cm fails the 1.0 cm gate",
          !grasp_success(off, {gt0}, {0.010, 10.0}, params).success);
    check("success: 1.2 cm passes the 1.5 cm gate",
          grasp_success(off, {gt0}, {0.015, 10.0}, params).success);
  }
  {
    check("lr schedule before first milestone",
          lr_schedule(5, 1e-4, {200, 250}) == 1e-4);
    check("lr schedule after both milestones",
          std::abs(lr_schedule(300, 1e-4, {200, 250}) - 1e-6) < 1e-18);
    check("lr schedule with no milestones", lr_schedule(300, 1e-4, {}) == 1e-4);
  }
  {
    PrimitiveObject big;
    big.category = Category::Sphere;
    big.size = {0.06, 0.0, 0.0};
    big.pose.translation = {0.0, 0.0, 0.06};
    check("sphere wider than the gripper yields no grasps",
          grasp_labels_for_primitive(big, 0, GripperModel{}, 0.02).empty());
  }
  {
    CorrespondenceSet x;
    check("log likelihood is minus the weighted cost",
          log_likelihood(x, Pose::identity()) == 0.0);
  }
  res.report = report.str();
  return res;
}

}  // namespace kgnpro
