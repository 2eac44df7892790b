#include "kgnpro/prob_pnp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "kgnpro/error.hpp"

namespace kgnpro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMinDepth = 1e-6;
constexpr double kBehindPenaltyPx = 1e6;

double log_sum_exp(const std::vector<double>& v) {
  double mx = kNegInf;
  for (double x : v)
    if (x > mx) mx = x;
  if (!std::isfinite(mx)) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Eigen::VectorXd floors_for(const MCSampleSet& shape, const MCConfig& cfg) {
  Eigen::VectorXd f(shape.dim());
  if (shape.planar) {
    f << cfg.scale_floor_trans, cfg.scale_floor_trans, cfg.scale_floor_rot;
  } else {
    f.head<3>().setConstant(cfg.scale_floor_trans);
    f.tail<3>().setConstant(cfg.scale_floor_rot);
  }
  return f;
}

Eigen::VectorXd fallback_for(const MCSampleSet& shape, const MCConfig& cfg) {
  Eigen::VectorXd f(shape.dim());
  if (shape.planar) {
    f << cfg.fallback_trans, cfg.fallback_trans, cfg.fallback_rot;
  } else {
    f.head<3>().setConstant(cfg.fallback_trans);
    f.tail<3>().setConstant(cfg.fallback_rot);
  }
  return f;
}

// sqrt(diag(H^-1)) with the configured floors, or the fallback scales when H
// is not safely invertible.
Eigen::VectorXd initial_scales(const Eigen::MatrixXd& h,
                               const MCSampleSet& shape, const MCConfig& cfg) {
  const Eigen::VectorXd fallback = fallback_for(shape, cfg);
  if (!h.allFinite()) return fallback;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) return fallback;
  const double max_eig = es.eigenvalues().maxCoeff();
  const double min_eig = es.eigenvalues().minCoeff();
  if (!(max_eig > 0.0) || min_eig <= 1e-12 * max_eig) return fallback;
  const Eigen::MatrixXd cov = es.eigenvectors() *
                              es.eigenvalues().cwiseInverse().asDiagonal() *
                              es.eigenvectors().transpose();
  Eigen::VectorXd scales = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!scales.allFinite()) return fallback;
  return scales.cwiseMax(floors_for(shape, cfg));
}

void store_proposal(MCSampleSet& set, const Eigen::VectorXd& center,
                    const Eigen::VectorXd& scales, double nu) {
  ProposalDistribution p;
  p.center = center;
  p.scales = scales;
  p.nu = nu;
  p.center_pose = chart_to_pose(set, center);
  if (set.planar) {
    p.trans_scale = {scales(0), scales(1), 0.0};
    p.rot_scale = {0.0, 0.0, scales(2)};
  } else {
    p.trans_scale = scales.head<3>();
    p.rot_scale = scales.tail<3>();
  }
  set.proposals.push_back(p);
}

// Shared AMIS loop; the chart is already fixed inside `set`.
void amis_run(MCSampleSet& set, const CorrespondenceSet& x,
              const Eigen::VectorXd& center0, const Eigen::VectorXd& scales0,
              const MCConfig& cfg, SeededRng& rng) {
  const int d = set.dim();
  const Eigen::VectorXd floors = floors_for(set, cfg);
  Eigen::VectorXd center = center0;
  Eigen::VectorXd scales = scales0.cwiseMax(floors);

  for (int round = 0; round < cfg.rounds; ++round) {
    store_proposal(set, center, scales, cfg.nu);
    for (int k = 0; k < cfg.k_per_round; ++k) {
      Eigen::VectorXd coords(d);
      for (int a = 0; a < d; ++a)
        coords(a) = center(a) + scales(a) * rng.student_t(cfg.nu);
      McSample s;
      s.coords = coords;
      s.pose = chart_to_pose(set, coords);
      s.log_lik = -weighted_cost(x, s.pose);
      set.samples.push_back(std::move(s));
    }
    // AMIS rule: every sample so far is re-weighted against the equal-weight
    // mixture of the proposals used so far.
    for (auto& s : set.samples) {
      s.log_mix = mixture_logpdf(set, s.coords);
      s.log_v = s.log_lik - s.log_mix;
      s.v = std::exp(s.log_v);
    }
    if (round + 1 == cfg.rounds) break;

    // Re-fit a diagonal proposal from the weighted mean and variance.
    const double lse = [&] {
      std::vector<double> lv;
      lv.reserve(set.samples.size());
      for (const auto& s : set.samples) lv.push_back(s.log_v);
      return log_sum_exp(lv);
    }();
    if (!std::isfinite(lse)) continue;  // keep the current proposal
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto& s : set.samples)
      mean += std::exp(s.log_v - lse) * s.coords;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
    for (const auto& s : set.samples) {
      const Eigen::VectorXd dd = s.coords - mean;
      var += std::exp(s.log_v - lse) * dd.cwiseProduct(dd);
    }
    if (!mean.allFinite() || !var.allFinite()) continue;
    center = mean;
    scales = var.cwiseSqrt().cwiseMax(floors);
  }
}

// d(cost)/d(p2d_i), d(cost)/d(w2d_i) at pose y, consistent with the
// behind-camera penalty plateau used by reproj_error.
void cost_partials(const Correspondence& c, const CameraIntrinsics& k,
                   const Pose& y, Vector2d& d_p2d, Vector2d& d_w2d) {
  const Vector3d p = y.apply(c.p3d);
  if (p.z() <= kMinDepth) {
    d_p2d.setZero();  // penalty is constant in p2d
    d_w2d = c.w2d * (kBehindPenaltyPx * kBehindPenaltyPx);
    return;
  }
  const Vector2d e = project(k, p) - c.p2d;
  d_p2d = -c.w2d.cwiseProduct(c.w2d).cwiseProduct(e);
  d_w2d = c.w2d.cwiseProduct(e).cwiseProduct(e);
}

}  // namespace

Pose chart_to_pose(const MCSampleSet& s, const Eigen::VectorXd& coords) {
  if (s.planar) return planar_pose(coords.head<3>(), s.planar_depth);
  return pose_compose(se3_exp(Twist::from_packed(coords)), s.anchor);
}

double mixture_logpdf(const MCSampleSet& s, const Eigen::VectorXd& coords) {
  std::vector<double> per_round;
  per_round.reserve(s.proposals.size());
  for (const auto& q : s.proposals) {
    double lp = 0.0;
    for (int a = 0; a < coords.size(); ++a)
      lp += student_t_logpdf(coords(a) - q.center(a), q.scales(a), q.nu);
    per_round.push_back(lp);
  }
  return log_sum_exp(per_round) -
         std::log(static_cast<double>(s.proposals.size()));
}

double log_likelihood(const CorrespondenceSet& x, const Pose& y) {
  return -weighted_cost(x, y);
}

MCSampleSet amis_sample(const CorrespondenceSet& x, const SolveReport& mode,
                        const MCConfig& cfg, SeededRng& rng) {
  if (!mode.converged)
    raise(ErrorCode::InvalidArgument, "amis_sample: mode not converged");
  MCSampleSet set;
  set.planar = false;
  set.anchor = mode.pose;

  const CostDerivatives d = cost_jacobian(x, mode.pose);
  const Eigen::MatrixXd h = d.jacobian.transpose() * d.jacobian;
  const Eigen::VectorXd scales0 = initial_scales(h, set, cfg);
  amis_run(set, x, Eigen::VectorXd::Zero(6), scales0, cfg, rng);
  return set;
}

Pose planar_pose(const Eigen::Vector3d& coords, double depth) {
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(coords(2), Vector3d::UnitZ()));
  p.translation = {coords(0), coords(1), depth};
  return p;
}

PlanarSolveReport solve_planar(const CorrespondenceSet& x, double depth,
                               const Eigen::Vector3d& init,
                               const SolverConfig& cfg) {
  if (x.items.size() < 2)
    raise(ErrorCode::Underdetermined,
          "underdetermined: planar solve needs >= 2 correspondences");

  const int n = static_cast<int>(x.items.size());
  PlanarSolveReport rep;
  rep.coords = init;

  const auto eval = [&](const Eigen::Vector3d& c, Eigen::VectorXd* r,
                        Eigen::MatrixXd* j) -> double {
    const Pose y = planar_pose(c, depth);
    if (r) r->setZero(2 * n);
    if (j) j->setZero(2 * n, 3);
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& it = x.items[i];
      const Vector3d p = y.apply(it.p3d);
      if (p.z() <= kMinDepth) {
        cost += 0.5 * (it.w2d * kBehindPenaltyPx).squaredNorm();
        if (r) (*r).segment<2>(2 * i) = it.w2d * kBehindPenaltyPx;
        continue;
      }
      const Vector2d e = project(x.intrinsics, p) - it.p2d;
      const Vector2d we = it.w2d.cwiseProduct(e);
      cost += 0.5 * we.squaredNorm();
      if (r) (*r).segment<2>(2 * i) = we;
      if (j) {
        const double iz = 1.0 / p.z();
        Eigen::Matrix<double, 2, 3> jproj;
        jproj << x.intrinsics.fx * iz, 0.0, -x.intrinsics.fx * p.x() * iz * iz,
            0.0, x.intrinsics.fy * iz, -x.intrinsics.fy * p.y() * iz * iz;
        Eigen::Matrix<double, 3, 3> jc;
        const Vector3d rp = y.rotation * it.p3d;
        jc.col(0) = Vector3d::UnitX();
        jc.col(1) = Vector3d::UnitY();
        jc.col(2) = Vector3d::UnitZ().cross(rp);
        (*j).block<2, 3>(2 * i, 0) = it.w2d.asDiagonal() * (jproj * jc);
      }
    }
    return cost;
  };

  double lambda = cfg.lambda_init;
  Eigen::VectorXd r;
  Eigen::MatrixXd j;
  rep.cost = eval(rep.coords, &r, &j);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Eigen::Vector3d g = j.transpose() * r;
    rep.hessian = j.transpose() * j;
    if (g.norm() < cfg.grad_tol) {
      rep.converged = true;
      break;
    }
    const Eigen::Vector3d step =
        (rep.hessian + lambda * Eigen::Matrix3d::Identity())
            .ldlt()
            .solve(-g);
    const Eigen::Vector3d cand = rep.coords + step;
    const double cand_cost = eval(cand, nullptr, nullptr);
    if (cand_cost < rep.cost) {
      rep.coords = cand;
      rep.cost = cand_cost;
      lambda = std::max(lambda / 10.0, cfg.lambda_min);
      rep.cost = eval(rep.coords, &r, &j);
      if (step.norm() < cfg.step_tol) {
        rep.converged = true;
        break;
      }
    } else {
      lambda = std::min(lambda * 10.0, cfg.lambda_max);
      if (step.norm() < cfg.step_tol) {
        rep.converged = true;
        break;
      }
    }
  }
  eval(rep.coords, &r, &j);
  rep.hessian = j.transpose() * j;
  return rep;
}

MCSampleSet amis_sample_planar(const CorrespondenceSet& x, double depth,
                               const PlanarSolveReport& mode,
                               const MCConfig& cfg, SeededRng& rng) {
  if (!mode.converged)
    raise(ErrorCode::InvalidArgument, "amis_sample_planar: mode not converged");
  MCSampleSet set;
  set.planar = true;
  set.planar_depth = depth;
  const Eigen::VectorXd scales0 = initial_scales(mode.hessian, set, cfg);
  amis_run(set, x, mode.coords, scales0, cfg, rng);
  return set;
}

double l_pred(const MCSampleSet& s) {
  std::vector<double> lv;
  lv.reserve(s.samples.size());
  bool any = false;
  for (const auto& smp : s.samples) {
    lv.push_back(smp.log_v);
    if (std::isfinite(smp.log_v)) any = true;
  }
  if (lv.empty() || !any)
    raise(ErrorCode::DegenerateSampleSet, "degenerate sample set");
  return log_sum_exp(lv) - std::log(static_cast<double>(lv.size()));
}

double l_pred_reweighted(const MCSampleSet& s, const CorrespondenceSet& x) {
  std::vector<double> lv;
  lv.reserve(s.samples.size());
  bool any = false;
  for (const auto& smp : s.samples) {
    const double lik = -weighted_cost(x, smp.pose);
    const double v = lik - smp.log_mix;
    lv.push_back(v);
    if (std::isfinite(v)) any = true;
  }
  if (lv.empty() || !any)
    raise(ErrorCode::DegenerateSampleSet, "degenerate sample set");
  return log_sum_exp(lv) - std::log(static_cast<double>(lv.size()));
}

double effective_sample_size(const MCSampleSet& s) {
  double sum = 0.0, sum2 = 0.0;
  for (const auto& smp : s.samples) {
    sum += smp.v;
    sum2 += smp.v * smp.v;
  }
  if (sum2 <= 0.0) return 0.0;
  return sum * sum / sum2;
}

double kl_value_on_samples(const MCSampleSet& s, const CorrespondenceSet& x,
                           const Pose& target) {
  return l_pred_reweighted(s, x) + weighted_cost(x, target);
}

GraspKlTerm kl_grad_on_samples(const MCSampleSet& s,
                               const CorrespondenceSet& x, const Pose& target,
                               std::vector<Vector2d>& d_p2d,
                               std::vector<Vector2d>& d_w2d) {
  const int n = static_cast<int>(x.items.size());
  d_p2d.assign(n, Vector2d::Zero());
  d_w2d.assign(n, Vector2d::Zero());

  // Self-normalized weights of the frozen sample set under x.
  std::vector<double> lv(s.samples.size());
  for (size_t j = 0; j < s.samples.size(); ++j)
    lv[j] = -weighted_cost(x, s.samples[j].pose) - s.samples[j].log_mix;
  const double lse = log_sum_exp(lv);
  if (!std::isfinite(lse))
    raise(ErrorCode::DegenerateSampleSet, "degenerate sample set");

  GraspKlTerm term;
  term.l_pred = lse - std::log(static_cast<double>(s.samples.size()));
  term.target_cost = weighted_cost(x, target);

  // d l_pred = - E_vtilde [ d cost ]; the expectation is over the samples.
  Vector2d dp, dw;
  for (size_t j = 0; j < s.samples.size(); ++j) {
    const double vt = std::exp(lv[j] - lse);
    if (vt == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      cost_partials(x.items[i], x.intrinsics, s.samples[j].pose, dp, dw);
      d_p2d[i] -= vt * dp;
      d_w2d[i] -= vt * dw;
    }
  }
  // Dirac-target term: exact derivative of the cost at the matched pose.
  for (int i = 0; i < n; ++i) {
    cost_partials(x.items[i], x.intrinsics, target, dp, dw);
    d_p2d[i] += dp;
    d_w2d[i] += dw;
  }
  return term;
}

namespace {

MCSampleSet sample_for_grasp(const GraspSupervision& g, const KlConfig& cfg,
                             SeededRng& stream) {
  SolveReport mode = multi_start_solve(g.x, cfg.solver, stream);
  return amis_sample(g.x, mode, cfg.mc, stream);
}

}  // namespace

KlBreakdown kl_loss(const std::vector<GraspSupervision>& grasps,
                    const KlConfig& cfg, const SeededRng& rng) {
  KlBreakdown out;
  for (size_t g = 0; g < grasps.size(); ++g) {
    SeededRng stream = rng.derive(g);
    SolveReport mode = multi_start_solve(grasps[g].x, cfg.solver, stream);
    MCSampleSet set = amis_sample(grasps[g].x, mode, cfg.mc, stream);
    GraspKlTerm term;
    term.mode = mode;
    term.l_pred = l_pred(set);
    term.target_cost = weighted_cost(grasps[g].x, grasps[g].target);
    out.total += term.l_pred + term.target_cost;
    out.per_grasp.push_back(std::move(term));
  }
  return out;
}

GradientBundle kl_loss_grad(const std::vector<GraspSupervision>& grasps,
                            const KlConfig& cfg, const SeededRng& rng) {
  GradientBundle out;
  out.d_p2d.resize(grasps.size());
  out.d_w2d.resize(grasps.size());
  for (size_t g = 0; g < grasps.size(); ++g) {
    SeededRng stream = rng.derive(g);
    SolveReport mode = multi_start_solve(grasps[g].x, cfg.solver, stream);
    MCSampleSet set = amis_sample(grasps[g].x, mode, cfg.mc, stream);
    GraspKlTerm term = kl_grad_on_samples(set, grasps[g].x, grasps[g].target,
                                          out.d_p2d[g], out.d_w2d[g]);
    term.mode = mode;
    out.loss += term.l_pred + term.target_cost;
    out.per_grasp.push_back(std::move(term));
  }
  return out;
}

double planar_grid_oracle(const CorrespondenceSet& x, double depth,
                          const PlanarBox& box, int resolution) {
  if (resolution < 1)
    raise(ErrorCode::InvalidArgument, "planar_grid_oracle: resolution < 1");
  const int n = resolution;
  const Eigen::Vector3d span = box.hi - box.lo;
  const Eigen::Vector3d h = span / static_cast<double>(n);
  const double cell_volume = h(0) * h(1) * h(2);

  const int m = static_cast<int>(x.items.size());
  // Running log-sum-exp so the full grid never has to be stored.
  double run_max = kNegInf;
  double run_sum = 0.0;
  const auto accumulate = [&](double lg) {
    if (lg <= run_max) {
      run_sum += std::exp(lg - run_max);
    } else {
      run_sum = run_sum * std::exp(run_max - lg) + 1.0;
      run_max = lg;
    }
  };

  // Precompute per-theta rotated model points; at fixed depth the projection
  // is affine in (x, y), so the inner loops are cheap.
  std::vector<double> ax(m), ay(m), bx(m), by(m), wx(m), wy(m), ox(m), oy(m);
  for (int it = 0; it < n; ++it) {
    const double theta = box.lo(2) + (it + 0.5) * h(2);
    const Eigen::Matrix3d rot =
        Eigen::AngleAxisd(theta, Vector3d::UnitZ()).toRotationMatrix();
    bool behind = false;
    for (int i = 0; i < m; ++i) {
      const Vector3d rp = rot * x.items[i].p3d;
      const double z = rp.z() + depth;
      if (z <= kMinDepth) {
        behind = true;
        break;
      }
      const double iz = 1.0 / z;
      ax[i] = x.intrinsics.fx * rp.x() * iz + x.intrinsics.cx;
      bx[i] = x.intrinsics.fx * iz;
      ay[i] = x.intrinsics.fy * rp.y() * iz + x.intrinsics.cy;
      by[i] = x.intrinsics.fy * iz;
      wx[i] = x.items[i].w2d.x();
      wy[i] = x.items[i].w2d.y();
      ox[i] = x.items[i].p2d.x();
      oy[i] = x.items[i].p2d.y();
    }
    for (int iy = 0; iy < n; ++iy) {
      const double py = box.lo(1) + (iy + 0.5) * h(1);
      for (int ix = 0; ix < n; ++ix) {
        const double px = box.lo(0) + (ix + 0.5) * h(0);
        double cost;
        if (behind) {
          cost = 0.0;
          for (int i = 0; i < m; ++i)
            cost += 0.5 * (wx[i] * wx[i] + wy[i] * wy[i]) * kBehindPenaltyPx *
                    kBehindPenaltyPx;
        } else {
          cost = 0.0;
          for (int i = 0; i < m; ++i) {
            const double ex = wx[i] * (ax[i] + bx[i] * px - ox[i]);
            const double ey = wy[i] * (ay[i] + by[i] * py - oy[i]);
            cost += 0.5 * (ex * ex + ey * ey);
          }
        }
        accumulate(-cost);
      }
    }
  }
  if (!std::isfinite(run_max)) return 0.0;
  return std::exp(run_max + std::log(run_sum) + std::log(cell_volume));
}

}  // namespace kgnpro
