#include "kgnpro/keypoint_map.hpp"

#include <algorithm>
#include <cmath>

#include "kgnpro/error.hpp"

namespace kgnpro {

namespace {

constexpr double kProbClamp = 1e-6;

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

}  // namespace

KeypointMap KeypointMap::zeros(int image_w, int image_h, int stride) {
  if (stride < 1) raise(ErrorCode::InvalidArgument, "stride must be >= 1");
  KeypointMap m;
  m.stride = stride;
  m.grid_w = image_w / stride;
  m.grid_h = image_h / stride;
  m.h.assign(static_cast<size_t>(m.cells()), 0.0);
  m.s.assign(static_cast<size_t>(m.cells()) * 2, 0.0);
  m.o.assign(static_cast<size_t>(m.cells()) * 8, 0.0);
  m.w.assign(static_cast<size_t>(m.cells()) * 8, 0.0);
  return m;
}

EncodeResult encode_grasps(const std::vector<Pose>& grasps_cam,
                           const CameraIntrinsics& k, const GripperModel& g,
                           int stride) {
  EncodeResult out;
  out.map = KeypointMap::zeros(k.width, k.height, stride);
  KeypointMap& m = out.map;

  const Vector3d center3d =
      (g.corners()[0] + g.corners()[1] + g.corners()[2] + g.corners()[3]) / 4.0;

  for (const auto& pose : grasps_cam) {
    const Vector3d pc = pose.apply(center3d);
    if (pc.z() <= 1e-6) {
      ++out.skipped;
      continue;
    }
    const Vector2d center_px = project(k, pc);
    const int cu = static_cast<int>(std::floor(center_px.x() / stride));
    const int cv = static_cast<int>(std::floor(center_px.y() / stride));
    if (!in_image(k, center_px) || cu < 0 || cu >= m.grid_w || cv < 0 ||
        cv >= m.grid_h) {
      ++out.skipped;
      continue;
    }

    std::array<Vector2d, 4> kp_px;
    Vector2d lo = center_px, hi = center_px;
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
      const Vector3d p = pose.apply(g.corners()[i]);
      if (p.z() <= 1e-6) {
        ok = false;
        break;
      }
      kp_px[i] = project(k, p);
      lo = lo.cwiseMin(kp_px[i]);
      hi = hi.cwiseMax(kp_px[i]);
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }

    // Scale-adaptive splat width, in cells.
    const double diameter = (hi - lo).norm();
    const double sigma = std::max(2.0, diameter / (3.0 * stride));
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    for (int v = std::max(0, cv - radius);
         v <= std::min(m.grid_h - 1, cv + radius); ++v) {
      for (int u = std::max(0, cu - radius);
           u <= std::min(m.grid_w - 1, cu + radius); ++u) {
        const double du = u - cu;
        const double dv = v - cv;
        const double val = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
        m.h_at(u, v) = std::max(m.h_at(u, v), val);
      }
    }

    m.s_at(cu, cv) = center_px - Vector2d(cu * stride, cv * stride);
    for (int i = 0; i < 4; ++i) {
      m.o_at(cu, cv, i) = kp_px[i] - center_px;
      m.w_at(cu, cv, i) = Vector2d::Ones();
    }
  }
  return out;
}

std::vector<GraspDetection2D> decode_keypoints(const KeypointMap& m,
                                               double threshold, int top_k) {
  struct Candidate {
    double score;
    int u, v;
  };
  std::vector<Candidate> cands;
  for (int v = 0; v < m.grid_h; ++v) {
    for (int u = 0; u < m.grid_w; ++u) {
      const double val = m.h_at(u, v);
      if (!(val > threshold)) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1 && is_max; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          if (du == 0 && dv == 0) continue;
          const int nu = u + du, nv = v + dv;
          if (nu < 0 || nu >= m.grid_w || nv < 0 || nv >= m.grid_h) continue;
          if (m.h_at(nu, nv) > val) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) cands.push_back({val, u, v});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [&m](const Candidate& a, const Candidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return m.idx(a.u, a.v) < m.idx(b.u, b.v);
                   });
  if (top_k >= 0 && static_cast<int>(cands.size()) > top_k)
    cands.resize(static_cast<size_t>(top_k));

  std::vector<GraspDetection2D> out;
  out.reserve(cands.size());
  for (const auto& c : cands) {
    GraspDetection2D det;
    det.score = c.score;
    det.center = Vector2d(c.u * m.stride, c.v * m.stride) + m.s_at(c.u, c.v);
    for (int i = 0; i < 4; ++i) {
      det.keypoints[i] = det.center + m.o_at(c.u, c.v, i);
      det.weights[i] = m.w_at(c.u, c.v, i);
    }
    out.push_back(det);
  }
  return out;
}

double focal_loss(const std::vector<double>& pred_h,
                  const std::vector<double>& gt_h) {
  if (pred_h.size() != gt_h.size())
    raise(ErrorCode::InvalidArgument, "focal_loss: shape mismatch");
  double loss = 0.0;
  int peaks = 0;
  for (size_t i = 0; i < pred_h.size(); ++i) {
    const double p = clamp_prob(pred_h[i]);
    const double gt = gt_h[i];
    if (gt == 1.0) {
      ++peaks;
      loss -= (1.0 - p) * (1.0 - p) * std::log(p);
    } else {
      const double down = (1.0 - gt) * (1.0 - gt) * (1.0 - gt) * (1.0 - gt);
      loss -= down * p * p * std::log(1.0 - p);
    }
  }
  return loss / std::max(1, peaks);
}

std::vector<double> focal_loss_grad(const std::vector<double>& pred_h,
                                    const std::vector<double>& gt_h) {
  if (pred_h.size() != gt_h.size())
    raise(ErrorCode::InvalidArgument, "focal_loss: shape mismatch");
  int peaks = 0;
  for (double gt : gt_h)
    if (gt == 1.0) ++peaks;
  const double norm = 1.0 / std::max(1, peaks);

  std::vector<double> grad(pred_h.size(), 0.0);
  for (size_t i = 0; i < pred_h.size(); ++i) {
    const double raw = pred_h[i];
    if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;  // clamped flat
    const double p = raw;
    const double gt = gt_h[i];
    double d;  // d(per-cell loss)/dp
    if (gt == 1.0) {
      d = 2.0 * (1.0 - p) * std::log(p) - (1.0 - p) * (1.0 - p) / p;
    } else {
      const double down = (1.0 - gt) * (1.0 - gt) * (1.0 - gt) * (1.0 - gt);
      d = down * (-2.0 * p * std::log(1.0 - p) + p * p / (1.0 - p));
    }
    grad[i] = d * norm;
  }
  return grad;
}

double l1_offset_loss(const std::vector<double>& pred,
                      const std::vector<double>& gt,
                      const std::vector<int>& mask_cells, int components) {
  if (pred.size() != gt.size())
    raise(ErrorCode::InvalidArgument, "l1_offset_loss: shape mismatch");
  if (mask_cells.empty()) return 0.0;
  double sum = 0.0;
  for (int cell : mask_cells)
    for (int c = 0; c < components; ++c)
      sum += std::abs(pred[static_cast<size_t>(cell) * components + c] -
                      gt[static_cast<size_t>(cell) * components + c]);
  return sum / (static_cast<double>(mask_cells.size()) * components);
}

std::vector<double> l1_offset_loss_grad(const std::vector<double>& pred,
                                        const std::vector<double>& gt,
                                        const std::vector<int>& mask_cells,
                                        int components) {
  std::vector<double> grad(pred.size(), 0.0);
  if (mask_cells.empty()) return grad;
  const double norm = 1.0 / (static_cast<double>(mask_cells.size()) * components);
  for (int cell : mask_cells) {
    for (int c = 0; c < components; ++c) {
      const size_t i = static_cast<size_t>(cell) * components + c;
      const double d = pred[i] - gt[i];
      grad[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * norm;
    }
  }
  return grad;
}

std::vector<int> peak_cells(const KeypointMap& m) {
  std::vector<int> cells;
  for (int i = 0; i < m.cells(); ++i)
    if (m.h[static_cast<size_t>(i)] == 1.0) cells.push_back(i);
  return cells;
}

}  // namespace kgnpro
