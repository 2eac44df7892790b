#pragma once

#include <string>
#include <vector>

#include "kgnpro/pnp.hpp"

namespace kgnpro {

enum class Category { Cylinder, Ring, Stick, Sphere, SemiSphere, Cuboid };

const char* category_name(Category c);
Category category_from_name(const std::string& name);

// Primitive resting on the z = 0 plane. Size parameters by category:
//   Cylinder:   radius, height          (axis vertical)
//   Ring:       major radius, tube radius (lying flat)
//   Stick:      radius, length          (axis horizontal, object x)
//   Sphere:     radius
//   SemiSphere: radius                  (flat face down)
//   Cuboid:     extent x, y, z          (axis aligned in object frame)
struct PrimitiveObject {
  Category category = Category::Cylinder;
  Vector3d size{0.0, 0.0, 0.0};
  Pose pose;  // object in world
};

struct GraspLabel {
  Pose pose;  // gripper in world
  int object_index = 0;
  double width = 0.0;
};

struct Scene {
  std::vector<PrimitiveObject> objects;
  std::vector<GraspLabel> grasps;
  Pose camera;  // camera in world
  CameraIntrinsics intrinsics;
  std::uint64_t seed = 0;
};

struct SceneConfig {
  int n_objects = 1;
  std::vector<Category> categories = {Category::Cylinder, Category::Ring,
                                      Category::Stick,    Category::Sphere,
                                      Category::SemiSphere, Category::Cuboid};
  double workspace = 0.6;  // side length of the placement square, m
  double camera_elev_min_deg = 30.0;
  double camera_elev_max_deg = 90.0;
  double camera_dist_min = 0.6;
  double camera_dist_max = 1.0;
  double grasp_spacing = 0.02;  // m along grasp families
  CameraIntrinsics intrinsics;
  GripperModel gripper;
  int max_grasps_per_object = 64;
};

// Analytic antipodal grasp families for one primitive, in world frame.
// Returns only plane-clear grasps (all four gripper corners at z > 0);
// objects too large for the gripper yield an empty list.
std::vector<GraspLabel> grasp_labels_for_primitive(const PrimitiveObject& obj,
                                                   int object_index,
                                                   const GripperModel& g,
                                                   double spacing);

// Non-interpenetrating placement (bounding-sphere separation), hemisphere
// camera aimed at the scene centroid, grasps filtered to those whose four
// keypoints project inside the image. Pure function of (cfg, seed).
Scene sample_scene(const SceneConfig& cfg, std::uint64_t seed);

struct NoiseModel {
  double sigma_px = 0.0;
  double outlier_fraction = 0.0;
  double outlier_px = 0.0;
};

// Per-grasp correspondences: anchored at the gripper corners, observed at the
// (optionally noisy) projections, unit weights.
struct Observation {
  int grasp_index = 0;
  Pose gt_pose_cam;  // grasp pose in camera frame
  CorrespondenceSet x;
  std::array<bool, 4> corrupted{false, false, false, false};
};

std::vector<Observation> observe_scene(const Scene& s, const NoiseModel& noise,
                                       SeededRng& rng);

// Versioned line-oriented text format; numeric fields round-trip bit-exactly.
void save_scene(const Scene& s, const std::string& path);
Scene load_scene(const std::string& path);

// Camera-frame grasp pose for grasp i of the scene.
Pose grasp_pose_cam(const Scene& s, int grasp_index);

}  // namespace kgnpro
