#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "kgnpro/geometry.hpp"

namespace kgnpro {

// Dense grids produced by encoding grasps: center heatmap H, sub-pixel center
// offsets S, center-to-keypoint offsets O and per-keypoint confidence weights
// W. All grids share the spatial shape (width/stride x height/stride); cell
// (u, v) covers pixels [u*stride, (u+1)*stride) x [v*stride, (v+1)*stride).
struct KeypointMap {
  int grid_w = 0;
  int grid_h = 0;
  int stride = 4;
  std::vector<double> h;  // grid_h * grid_w, values in [0, 1]
  std::vector<double> s;  // grid_h * grid_w * 2, pixels
  std::vector<double> o;  // grid_h * grid_w * 8, pixels (4 keypoints x 2)
  std::vector<double> w;  // grid_h * grid_w * 8, nonneg weights

  static KeypointMap zeros(int image_w, int image_h, int stride);

  int cells() const { return grid_w * grid_h; }
  int idx(int u, int v) const { return v * grid_w + u; }

  double& h_at(int u, int v) { return h[idx(u, v)]; }
  double h_at(int u, int v) const { return h[idx(u, v)]; }
  Eigen::Map<Vector2d> s_at(int u, int v) {
    return Eigen::Map<Vector2d>(s.data() + 2 * idx(u, v));
  }
  Eigen::Map<const Vector2d> s_at(int u, int v) const {
    return Eigen::Map<const Vector2d>(s.data() + 2 * idx(u, v));
  }
  Eigen::Map<Vector2d> o_at(int u, int v, int k) {
    return Eigen::Map<Vector2d>(o.data() + 8 * idx(u, v) + 2 * k);
  }
  Eigen::Map<const Vector2d> o_at(int u, int v, int k) const {
    return Eigen::Map<const Vector2d>(o.data() + 8 * idx(u, v) + 2 * k);
  }
  Eigen::Map<Vector2d> w_at(int u, int v, int k) {
    return Eigen::Map<Vector2d>(w.data() + 8 * idx(u, v) + 2 * k);
  }
  Eigen::Map<const Vector2d> w_at(int u, int v, int k) const {
    return Eigen::Map<const Vector2d>(w.data() + 8 * idx(u, v) + 2 * k);
  }
};

struct GraspDetection2D {
  Vector2d center{0.0, 0.0};
  std::array<Vector2d, 4> keypoints;
  std::array<Vector2d, 4> weights;
  double score = 0.0;
};

struct EncodeResult {
  KeypointMap map;
  int skipped = 0;  // grasps whose center projected outside the image
};

// Encodes camera-frame grasp poses. Each grasp splats a Gaussian peak (value
// exactly 1 at its center cell) into H and writes S/O/W at that cell; splat
// overlaps take the elementwise max.
EncodeResult encode_grasps(const std::vector<Pose>& grasps_cam,
                           const CameraIntrinsics& k, const GripperModel& g,
                           int stride);

// Keypoints of detection i, per the decoding rule
//   p_k = ((u, v) * stride + S(u, v)) + O_k(u, v).
// Candidates are 3x3 local maxima of H strictly above `threshold`, sorted by
// descending score with row-major ties, truncated to top_k.
std::vector<GraspDetection2D> decode_keypoints(const KeypointMap& m,
                                               double threshold, int top_k);

// Penalty-reduced pixelwise focal loss for center heatmaps (probability
// exponent 2, (1 - gt) down-weighting exponent 4), normalized by the number
// of gt == 1 cells (at least 1). Predictions are clamped to [1e-6, 1 - 1e-6].
double focal_loss(const std::vector<double>& pred_h,
                  const std::vector<double>& gt_h);
// Gradient of focal_loss w.r.t. pred_h, same clamping.
std::vector<double> focal_loss_grad(const std::vector<double>& pred_h,
                                    const std::vector<double>& gt_h);

// Mean absolute error over the masked cells only (mask indexes cells, values
// compare all `components` entries per cell). Empty mask -> 0.
double l1_offset_loss(const std::vector<double>& pred,
                      const std::vector<double>& gt,
                      const std::vector<int>& mask_cells, int components);
std::vector<double> l1_offset_loss_grad(const std::vector<double>& pred,
                                        const std::vector<double>& gt,
                                        const std::vector<int>& mask_cells,
                                        int components);

// Cells holding an encoded grasp center (H == 1).
std::vector<int> peak_cells(const KeypointMap& m);

}  // namespace kgnpro
