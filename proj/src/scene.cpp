#include "kgnpro/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kgnpro/error.hpp"
#include "kgnpro/textio.hpp"

namespace kgnpro {

namespace {

constexpr double kPi = M_PI;

// Grasp frame from a contact midpoint, closing direction and preferred body
// direction (the latter is re-orthogonalized against the closing axis).
Pose make_grasp_pose(const Vector3d& center, const Vector3d& closing,
                     const Vector3d& body_hint) {
  const Vector3d x = closing.normalized();
  Vector3d z = body_hint - body_hint.dot(x) * x;
  if (z.norm() < 1e-9) {
    const Vector3d alt =
        std::abs(x.z()) < 0.9 ? Vector3d::UnitZ() : Vector3d::UnitX();
    z = alt - alt.dot(x) * x;
  }
  z.normalize();
  const Vector3d y = z.cross(x);
  Matrix3d rot;
  rot.col(0) = x;
  rot.col(1) = y;
  rot.col(2) = z;
  Pose p;
  p.rotation = Eigen::Quaterniond(rot).normalized();
  p.translation = center;
  return p;
}

// Tilt the body direction around the closing axis, starting from vertical.
Vector3d tilted_body(const Vector3d& closing, double tilt_rad) {
  const Vector3d x = closing.normalized();
  Vector3d up = Vector3d::UnitZ() - Vector3d::UnitZ().dot(x) * x;
  if (up.norm() < 1e-9) up = Vector3d::UnitY();
  up.normalize();
  const Vector3d side = x.cross(up);
  return std::cos(tilt_rad) * up + std::sin(tilt_rad) * side;
}

bool plane_clear(const GripperModel& g, const Pose& world_pose) {
  for (const auto& c : gripper_keypoints_3d(g, world_pose))
    if (c.z() <= 1e-9) return false;
  return true;
}

std::vector<double> linspace_spaced(double lo, double hi, double spacing) {
  std::vector<double> out;
  if (hi < lo) return out;
  const int n = std::max(1, static_cast<int>(std::floor((hi - lo) / spacing)) + 1);
  if (n == 1) {
    out.push_back(0.5 * (lo + hi));
    return out;
  }
  for (int i = 0; i < n; ++i)
    out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

int angular_count(double radius, double spacing) {
  const double arc = 2.0 * kPi * std::max(radius, 1e-3);
  return std::clamp(static_cast<int>(std::round(arc / spacing)), 4, 12);
}

double resting_height(const PrimitiveObject& obj) {
  switch (obj.category) {
    case Category::Cylinder:
      return obj.size(1) / 2.0;
    case Category::Ring:
      return obj.size(1);
    case Category::Stick:
      return obj.size(0);
    case Category::Sphere:
      return obj.size(0);
    case Category::SemiSphere:
      return 0.0;
    case Category::Cuboid:
      return obj.size(2) / 2.0;
  }
  return 0.0;
}

double bounding_radius(const PrimitiveObject& obj) {
  const Vector3d& s = obj.size;
  switch (obj.category) {
    case Category::Cylinder:
      return std::hypot(s(0), s(1) / 2.0);
    case Category::Ring:
      return s(0) + s(1);
    case Category::Stick:
      return std::hypot(s(1) / 2.0, s(0));
    case Category::Sphere:
    case Category::SemiSphere:
      return s(0);
    case Category::Cuboid:
      return 0.5 * s.norm();
  }
  return 0.1;
}

}  // namespace

const char* category_name(Category c) {
  switch (c) {
    case Category::Cylinder:
      return "Cylinder";
    case Category::Ring:
      return "Ring";
    case Category::Stick:
      return "Stick";
    case Category::Sphere:
      return "Sphere";
    case Category::SemiSphere:
      return "SemiSphere";
    case Category::Cuboid:
      return "Cuboid";
  }
  return "?";
}

Category category_from_name(const std::string& name) {
  for (Category c :
       {Category::Cylinder, Category::Ring, Category::Stick, Category::Sphere,
        Category::SemiSphere, Category::Cuboid})
    if (name == category_name(c)) return c;
  raise(ErrorCode::ParseError, "unknown category token '" + name + "'");
}

std::vector<GraspLabel> grasp_labels_for_primitive(const PrimitiveObject& obj,
                                                   int object_index,
                                                   const GripperModel& g,
                                                   double spacing) {
  // Candidate grasps in the object frame; plane clearance is checked in
  // world coordinates afterwards.
  struct Candidate {
    Pose pose_obj;
    double width;
  };
  std::vector<Candidate> cands;
  const Vector3d& s = obj.size;
  const double ow = g.open_width;
  const std::array<double, 3> tilts = {0.0, -40.0 * kPi / 180.0,
                                       40.0 * kPi / 180.0};

  switch (obj.category) {
    case Category::Cylinder: {
      const double r = s(0), h = s(1);
      if (2.0 * r > ow) break;
      const double margin = std::min(0.2 * h, 0.01);
      const int npsi = angular_count(r, spacing);
      for (double t : linspace_spaced(-h / 2.0 + margin, h / 2.0 - margin,
                                      spacing)) {
        for (int ip = 0; ip < npsi; ++ip) {
          const double psi = 2.0 * kPi * ip / npsi;
          const Vector3d d(std::cos(psi), std::sin(psi), 0.0);
          for (double tilt : tilts)
            cands.push_back({make_grasp_pose(Vector3d(0.0, 0.0, t), d,
                                             tilted_body(d, tilt)),
                             2.0 * r});
        }
      }
      break;
    }
    case Category::Ring: {
      const double major = s(0), tube = s(1);
      if (2.0 * tube > ow) break;
      if (ow / 2.0 >= 2.0 * major - tube) break;  // fingers would span the ring
      const int npsi = angular_count(major, spacing);
      for (int ip = 0; ip < npsi; ++ip) {
        const double psi = 2.0 * kPi * ip / npsi;
        const Vector3d d(std::cos(psi), std::sin(psi), 0.0);
        const Vector3d center = major * d;
        cands.push_back({make_grasp_pose(center, d, Vector3d::UnitZ()),
                         2.0 * tube});
      }
      break;
    }
    case Category::Stick: {
      const double r = s(0), len = s(1);
      if (2.0 * r > ow) break;
      const double margin = std::min(0.2 * len, 0.01);
      const std::array<double, 3> gammas = {0.0, -30.0 * kPi / 180.0,
                                            30.0 * kPi / 180.0};
      for (double t :
           linspace_spaced(-len / 2.0 + margin, len / 2.0 - margin, spacing)) {
        for (double gamma : gammas) {
          const Vector3d d(0.0, std::cos(gamma), std::sin(gamma));
          cands.push_back({make_grasp_pose(Vector3d(t, 0.0, 0.0), d,
                                           tilted_body(d, 0.0)),
                           2.0 * r});
        }
      }
      break;
    }
    case Category::Sphere: {
      const double r = s(0);
      if (2.0 * r > ow) break;
      const int npsi = angular_count(r, spacing);
      const std::array<double, 3> elevations = {0.0, -30.0 * kPi / 180.0,
                                                30.0 * kPi / 180.0};
      for (double alpha : elevations) {
        for (int ip = 0; ip < npsi; ++ip) {
          const double psi = 2.0 * kPi * ip / npsi;
          const Vector3d d(std::cos(alpha) * std::cos(psi),
                           std::cos(alpha) * std::sin(psi), std::sin(alpha));
          for (double tilt : tilts)
            cands.push_back({make_grasp_pose(Vector3d::Zero(), d,
                                             tilted_body(d, tilt)),
                             2.0 * r});
        }
      }
      break;
    }
    case Category::SemiSphere: {
      const double r = s(0);
      // Horizontal chords through the dome axis; antipodality caps the
      // contact height at r * sin(5 deg).
      const double t_max = r * std::sin(5.0 * kPi / 180.0);
      for (double t : {0.4 * t_max, 0.9 * t_max}) {
        const double rho = std::sqrt(r * r - t * t);
        if (2.0 * rho > ow) continue;
        const int npsi = angular_count(r, spacing);
        for (int ip = 0; ip < npsi; ++ip) {
          const double psi = 2.0 * kPi * ip / npsi;
          const Vector3d d(std::cos(psi), std::sin(psi), 0.0);
          cands.push_back({make_grasp_pose(Vector3d(0.0, 0.0, t), d,
                                           Vector3d::UnitZ()),
                           2.0 * rho});
        }
      }
      break;
    }
    case Category::Cuboid: {
      const double ax = s(0), ay = s(1), az = s(2);
      const double mz = std::min(0.2 * az, 0.01);
      if (ax <= ow) {
        const Vector3d d = Vector3d::UnitX();
        for (double t :
             linspace_spaced(-az / 2.0 + mz, az / 2.0 - mz, spacing))
          for (double tilt : tilts)
            cands.push_back({make_grasp_pose(Vector3d(0.0, 0.0, t), d,
                                             tilted_body(d, tilt)),
                             ax});
      }
      if (ay <= ow) {
        const Vector3d d = Vector3d::UnitY();
        for (double t :
             linspace_spaced(-az / 2.0 + mz, az / 2.0 - mz, spacing))
          for (double tilt : tilts)
            cands.push_back({make_grasp_pose(Vector3d(0.0, 0.0, t), d,
                                             tilted_body(d, tilt)),
                             ay});
      }
      break;
    }
  }

  std::vector<GraspLabel> out;
  for (const auto& c : cands) {
    GraspLabel label;
    label.pose = pose_compose(obj.pose, c.pose_obj);
    label.object_index = object_index;
    label.width = c.width;
    if (plane_clear(g, label.pose)) out.push_back(label);
  }
  return out;
}

Scene sample_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.n_objects < 1)
    raise(ErrorCode::InvalidArgument, "sample_scene: n_objects must be >= 1");
  if (cfg.categories.empty())
    raise(ErrorCode::InvalidArgument, "sample_scene: no categories");

  SeededRng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.intrinsics = cfg.intrinsics;

  for (int i = 0; i < cfg.n_objects; ++i) {
    PrimitiveObject obj;
    obj.category =
        cfg.categories[static_cast<size_t>(rng.uniform_int(
            0, static_cast<int>(cfg.categories.size()) - 1))];
    switch (obj.category) {
      case Category::Cylinder:
        obj.size = {rng.uniform(0.012, 0.035), rng.uniform(0.05, 0.12), 0.0};
        break;
      case Category::Ring:
        obj.size = {rng.uniform(0.035, 0.06), rng.uniform(0.008, 0.018), 0.0};
        break;
      case Category::Stick:
        obj.size = {rng.uniform(0.006, 0.015), rng.uniform(0.10, 0.20), 0.0};
        break;
      case Category::Sphere:
        obj.size = {rng.uniform(0.015, 0.035), 0.0, 0.0};
        break;
      case Category::SemiSphere:
        obj.size = {rng.uniform(0.020, 0.038), 0.0, 0.0};
        break;
      case Category::Cuboid:
        obj.size = {rng.uniform(0.02, 0.06), rng.uniform(0.02, 0.06),
                    rng.uniform(0.03, 0.08)};
        break;
    }
    const double br = bounding_radius(obj);
    const double lim = cfg.workspace / 2.0 - br;
    if (lim <= 0.0)
      raise(ErrorCode::SceneTooCrowded, "scene too crowded: object exceeds workspace");
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double x = rng.uniform(-lim, lim);
      const double y = rng.uniform(-lim, lim);
      bool free = true;
      for (const auto& other : scene.objects) {
        const double sep = br + bounding_radius(other) + 0.015;
        const Vector3d d(other.pose.translation.x() - x,
                         other.pose.translation.y() - y, 0.0);
        if (d.norm() < sep) {
          free = false;
          break;
        }
      }
      if (!free) continue;
      const double yaw = rng.uniform(0.0, 2.0 * kPi);
      obj.pose.rotation =
          Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vector3d::UnitZ()));
      obj.pose.translation = {x, y, resting_height(obj)};
      placed = true;
    }
    if (!placed) raise(ErrorCode::SceneTooCrowded, "scene too crowded");
    scene.objects.push_back(obj);
  }

  // Camera on the upper hemisphere, optical axis through the centroid.
  Vector3d target = Vector3d::Zero();
  for (const auto& o : scene.objects) target += o.pose.translation;
  target /= static_cast<double>(scene.objects.size());

  const double elev = rng.uniform(cfg.camera_elev_min_deg * kPi / 180.0,
                                  cfg.camera_elev_max_deg * kPi / 180.0);
  const double azim = rng.uniform(0.0, 2.0 * kPi);
  const double dist = rng.uniform(cfg.camera_dist_min, cfg.camera_dist_max);
  const Vector3d pos =
      target + dist * Vector3d(std::cos(elev) * std::cos(azim),
                               std::cos(elev) * std::sin(azim),
                               std::sin(elev));
  const Vector3d fwd = (target - pos).normalized();
  Vector3d up = Vector3d::UnitZ();
  if (std::abs(fwd.dot(up)) > 0.995) up = Vector3d::UnitX();
  const Vector3d xc = fwd.cross(up).normalized();
  const Vector3d yc = fwd.cross(xc);
  Matrix3d rot;
  rot.col(0) = xc;
  rot.col(1) = yc;
  rot.col(2) = fwd;
  scene.camera.rotation = Eigen::Quaterniond(rot).normalized();
  scene.camera.translation = pos;

  // Grasp labels, kept only when all four keypoints land inside the image.
  const Pose world_to_cam = pose_inverse(scene.camera);
  for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
    auto labels = grasp_labels_for_primitive(scene.objects[i], i, cfg.gripper,
                                             cfg.grasp_spacing);
    std::vector<GraspLabel> visible;
    for (const auto& label : labels) {
      const Pose cam_pose = pose_compose(world_to_cam, label.pose);
      bool ok = true;
      for (const auto& corner : gripper_keypoints_3d(cfg.gripper, cam_pose)) {
        if (corner.z() <= 1e-6 ||
            !in_image(scene.intrinsics, project(scene.intrinsics, corner))) {
          ok = false;
          break;
        }
      }
      if (ok) visible.push_back(label);
    }
    // Deterministic stride subsampling keeps per-object counts bounded.
    if (static_cast<int>(visible.size()) > cfg.max_grasps_per_object) {
      const double step =
          static_cast<double>(visible.size()) / cfg.max_grasps_per_object;
      std::vector<GraspLabel> kept;
      for (int k = 0; k < cfg.max_grasps_per_object; ++k)
        kept.push_back(visible[static_cast<size_t>(k * step)]);
      visible = std::move(kept);
    }
    for (const auto& label : visible) scene.grasps.push_back(label);
  }
  return scene;
}

Pose grasp_pose_cam(const Scene& s, int grasp_index) {
  return pose_compose(pose_inverse(s.camera),
                      s.grasps[static_cast<size_t>(grasp_index)].pose);
}

std::vector<Observation> observe_scene(const Scene& s, const NoiseModel& noise,
                                       SeededRng& rng) {
  GripperModel gripper;  // corners are the model points of every grasp
  std::vector<Observation> out;
  for (int gi = 0; gi < static_cast<int>(s.grasps.size()); ++gi) {
    Observation ob;
    ob.grasp_index = gi;
    ob.gt_pose_cam = grasp_pose_cam(s, gi);
    ob.x.intrinsics = s.intrinsics;

    const auto corners = gripper.corners();
    std::array<Vector2d, 4> px;
    for (int i = 0; i < 4; ++i)
      px[i] = project(s.intrinsics, ob.gt_pose_cam.apply(corners[i]));

    if (noise.sigma_px > 0.0)
      for (int i = 0; i < 4; ++i)
        px[i] += noise.sigma_px * Vector2d(rng.normal(), rng.normal());

    const int n_outliers = static_cast<int>(
        std::llround(noise.outlier_fraction * 4.0));
    if (n_outliers > 0) {
      std::array<int, 4> order = {0, 1, 2, 3};
      for (int i = 3; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
      for (int k = 0; k < std::min(4, n_outliers); ++k) {
        const int i = order[k];
        const double ang = rng.uniform(0.0, 2.0 * kPi);
        px[i] = project(s.intrinsics, ob.gt_pose_cam.apply(corners[i])) +
                noise.outlier_px * Vector2d(std::cos(ang), std::sin(ang));
        ob.corrupted[i] = true;
      }
    }

    for (int i = 0; i < 4; ++i)
      ob.x.items.push_back({px[i], corners[i], Vector2d::Ones()});
    out.push_back(std::move(ob));
  }
  return out;
}

void save_scene(const Scene& s, const std::string& path) {
  std::ostringstream os;
  os << "KGNPRO_SCENE 1 " << s.seed << '\n';
  const auto P = [&](const Pose& p) {
    os << format_double(p.rotation.w()) << ' ' << format_double(p.rotation.x())
       << ' ' << format_double(p.rotation.y()) << ' '
       << format_double(p.rotation.z()) << ' '
       << format_double(p.translation.x()) << ' '
       << format_double(p.translation.y()) << ' '
       << format_double(p.translation.z());
  };
  os << "CAMERA " << format_double(s.intrinsics.fx) << ' '
     << format_double(s.intrinsics.fy) << ' ' << format_double(s.intrinsics.cx)
     << ' ' << format_double(s.intrinsics.cy) << ' ' << s.intrinsics.width
     << ' ' << s.intrinsics.height << ' ';
  P(s.camera);
  os << '\n';
  for (const auto& o : s.objects) {
    os << "OBJECT " << category_name(o.category) << ' '
       << format_double(o.size(0)) << ' ' << format_double(o.size(1)) << ' '
       << format_double(o.size(2)) << ' ';
    P(o.pose);
    os << '\n';
  }
  for (const auto& g : s.grasps) {
    os << "GRASP " << g.object_index << ' ' << format_double(g.width) << ' ';
    P(g.pose);
    os << '\n';
  }
  os << "END\n";
  write_file(path, os.str());
}

namespace {

Pose parse_pose_fields(const std::vector<std::string>& tok, size_t start,
                       int line_no) {
  const std::string at = " at line " + std::to_string(line_no);
  if (tok.size() != start + 7)
    raise(ErrorCode::ParseError, "wrong field count" + at);
  Pose p;
  p.rotation = Eigen::Quaterniond(parse_double(tok[start], "qw" + at),
                                  parse_double(tok[start + 1], "qx" + at),
                                  parse_double(tok[start + 2], "qy" + at),
                                  parse_double(tok[start + 3], "qz" + at));
  p.translation = {parse_double(tok[start + 4], "tx" + at),
                   parse_double(tok[start + 5], "ty" + at),
                   parse_double(tok[start + 6], "tz" + at)};
  return p;
}

}  // namespace

Scene load_scene(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line))
    raise(ErrorCode::ParseError, "empty scene file: " + path);
  ++line_no;
  auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "KGNPRO_SCENE")
    raise(ErrorCode::ParseError, "not a scene file (bad header): " + path);
  if (head[1] != "1")
    raise(ErrorCode::UnsupportedSchema,
          "unsupported schema version '" + head[1] + "' in " + path);

  Scene s;
  s.seed = static_cast<std::uint64_t>(parse_int(head[2], "seed"));
  bool have_camera = false;
  bool have_end = false;

  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string at = " at line " + std::to_string(line_no);
    if (have_end)
      raise(ErrorCode::ParseError, "content after END" + at);
    if (tok[0] == "CAMERA") {
      if (tok.size() != 14)
        raise(ErrorCode::ParseError, "CAMERA needs 13 fields" + at);
      s.intrinsics.fx = parse_double(tok[1], "fx" + at);
      s.intrinsics.fy = parse_double(tok[2], "fy" + at);
      s.intrinsics.cx = parse_double(tok[3], "cx" + at);
      s.intrinsics.cy = parse_double(tok[4], "cy" + at);
      s.intrinsics.width = static_cast<int>(parse_int(tok[5], "width" + at));
      s.intrinsics.height = static_cast<int>(parse_int(tok[6], "height" + at));
      s.camera = parse_pose_fields(tok, 7, line_no);
      have_camera = true;
    } else if (tok[0] == "OBJECT") {
      if (tok.size() != 12)
        raise(ErrorCode::ParseError, "OBJECT needs 11 fields" + at);
      PrimitiveObject o;
      o.category = category_from_name(tok[1]);
      o.size = {parse_double(tok[2], "size0" + at),
                parse_double(tok[3], "size1" + at),
                parse_double(tok[4], "size2" + at)};
      o.pose = parse_pose_fields(tok, 5, line_no);
      s.objects.push_back(o);
    } else if (tok[0] == "GRASP") {
      if (tok.size() != 10)
        raise(ErrorCode::ParseError, "GRASP needs 9 fields" + at);
      GraspLabel g;
      g.object_index = static_cast<int>(parse_int(tok[1], "object_index" + at));
      g.width = parse_double(tok[2], "width" + at);
      g.pose = parse_pose_fields(tok, 3, line_no);
      if (g.object_index < 0)
        raise(ErrorCode::ParseError, "negative object index" + at);
      s.grasps.push_back(g);
    } else if (tok[0] == "END") {
      have_end = true;
    } else {
      raise(ErrorCode::ParseError, "unknown record '" + tok[0] + "'" + at);
    }
  }
  if (!have_end)
    raise(ErrorCode::ParseError, "truncated scene file (missing END): " + path);
  if (!have_camera)
    raise(ErrorCode::ParseError, "scene file has no CAMERA record: " + path);
  for (const auto& g : s.grasps)
    if (g.object_index >= static_cast<int>(s.objects.size()))
      raise(ErrorCode::ParseError,
            "grasp references missing object " +
                std::to_string(g.object_index) + " in " + path);
  return s;
}

}  // namespace kgnpro
