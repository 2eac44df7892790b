#include "kgnpro/config.hpp"

#include <sstream>

#include "kgnpro/error.hpp"
#include "kgnpro/textio.hpp"

namespace kgnpro {

void ConfigMap::set(const std::string& key, const std::string& value,
                    Source source) {
  if (source != Source::Default && entries_.find(key) == entries_.end())
    raise(ErrorCode::Usage, "unknown config key '" + key + "'");
  entries_[key] = {value, source};
}

void ConfigMap::load_file(const std::string& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // Trim.
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorCode::ParseError, "config line " + std::to_string(line_no) +
                                       " has no '=': '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const auto vb = value.find_first_not_of(" \t");
    value = vb == std::string::npos ? "" : value.substr(vb);
    set(key, value, Source::File);
  }
}

bool ConfigMap::has(const std::string& key) const {
  return entries_.find(key) != entries_.end();
}

std::string ConfigMap::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end())
    raise(ErrorCode::Usage, "unknown config key '" + key + "'");
  return it->second.value;
}

double ConfigMap::get_double(const std::string& key) const {
  return parse_double(get_string(key), key);
}

int ConfigMap::get_int(const std::string& key) const {
  return static_cast<int>(parse_int(get_string(key), key));
}

std::uint64_t ConfigMap::get_u64(const std::string& key) const {
  return static_cast<std::uint64_t>(parse_int(get_string(key), key));
}

bool ConfigMap::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  raise(ErrorCode::ParseError, "boolean expected for " + key + ", got '" + v + "'");
}

std::string ConfigMap::describe() const {
  std::ostringstream os;
  for (const auto& [key, entry] : entries_) {
    const char* src = entry.source == Source::Default ? "default"
                      : entry.source == Source::File  ? "file"
                                                      : "flag";
    os << key << '=' << entry.value << "  (" << src << ")\n";
  }
  return os.str();
}

ConfigMap default_config() {
  ConfigMap m;
  const auto d = [&](const std::string& k, const std::string& v) {
    m.set(k, v, ConfigMap::Source::Default);
  };
  d("seed", "0");
  d("solver.max_iters", "100");
  d("solver.step_tol", "1e-10");
  d("solver.grad_tol", "1e-9");
  d("solver.n_starts", "8");
  d("solver.lambda_init", "1e-3");
  d("solver.lambda_min", "1e-12");
  d("solver.lambda_max", "1e6");
  d("solver.start_depth", "0.5");
  d("mc.rounds", "4");
  d("mc.k_per_round", "128");
  d("mc.nu", "3");
  d("mc.scale_floor_trans", "1e-4");
  d("mc.scale_floor_rot", "1e-3");
  d("mc.fallback_trans", "0.01");
  d("mc.fallback_rot", "0.1");
  d("match.rho", "0.05");
  d("match.max_dist", "0.1");
  d("match.symmetry", "true");
  d("loss.lambda_h", "1");
  d("loss.lambda_s", "1");
  d("loss.lambda_o", "1");
  d("loss.lambda_kl", "0.1");
  d("scene.n_objects", "1");
  d("scene.categories", "all");
  d("scene.workspace", "0.6");
  d("scene.camera_elev_min_deg", "30");
  d("scene.camera_elev_max_deg", "90");
  d("scene.camera_dist_min", "0.6");
  d("scene.camera_dist_max", "1.0");
  d("scene.grasp_spacing", "0.02");
  d("scene.max_grasps_per_object", "64");
  d("camera.fx", "616");
  d("camera.fy", "616");
  d("camera.cx", "320");
  d("camera.cy", "240");
  d("camera.width", "640");
  d("camera.height", "480");
  d("gripper.open_width", "0.08");
  d("gripper.depth", "0.04");
  d("optim.iters", "500");
  d("optim.lr_px", "0.1");
  d("optim.lr_logit", "0.01");
  d("optim.momentum", "0.9");
  d("optim.milestones", "");
  d("optim.fresh_mc_seed", "true");
  d("optim.init_perturb_px", "0");
  d("noise.sigma_px", "0");
  d("noise.outlier_fraction", "0");
  d("noise.outlier_px", "0");
  d("eval.thresholds", "1.0:10,1.5:10,2.0:10,5.0:10,1.0:20,1.5:20,2.0:20,5.0:20,1.0:45,1.5:45,2.0:45,5.0:45");
  d("codec.stride", "4");
  d("codec.threshold", "0.3");
  d("codec.top_k", "100");
  d("solve.use_map_codec", "false");
  d("gen.num", "10");
  d("gradcheck.trials", "100");
  return m;
}

RunConfig resolve_config(const ConfigMap& m) {
  RunConfig c;
  c.seed = m.get_u64("seed");
  c.solver.max_iters = m.get_int("solver.max_iters");
  c.solver.step_tol = m.get_double("solver.step_tol");
  c.solver.grad_tol = m.get_double("solver.grad_tol");
  c.solver.n_starts = m.get_int("solver.n_starts");
  c.solver.lambda_init = m.get_double("solver.lambda_init");
  c.solver.lambda_min = m.get_double("solver.lambda_min");
  c.solver.lambda_max = m.get_double("solver.lambda_max");
  c.solver.start_depth = m.get_double("solver.start_depth");
  c.mc.rounds = m.get_int("mc.rounds");
  c.mc.k_per_round = m.get_int("mc.k_per_round");
  c.mc.nu = m.get_double("mc.nu");
  c.mc.scale_floor_trans = m.get_double("mc.scale_floor_trans");
  c.mc.scale_floor_rot = m.get_double("mc.scale_floor_rot");
  c.mc.fallback_trans = m.get_double("mc.fallback_trans");
  c.mc.fallback_rot = m.get_double("mc.fallback_rot");
  c.match.rho = m.get_double("match.rho");
  c.match.max_dist = m.get_double("match.max_dist");
  c.match.use_symmetry = m.get_bool("match.symmetry");
  c.loss.lambda_h = m.get_double("loss.lambda_h");
  c.loss.lambda_s = m.get_double("loss.lambda_s");
  c.loss.lambda_o = m.get_double("loss.lambda_o");
  c.loss.lambda_kl = m.get_double("loss.lambda_kl");
  c.scene.n_objects = m.get_int("scene.n_objects");
  const std::string cats = m.get_string("scene.categories");
  if (cats != "all" && !cats.empty()) {
    c.scene.categories.clear();
    for (const auto& name : split_char(cats, ','))
      if (!name.empty()) c.scene.categories.push_back(category_from_name(name));
  }
  c.scene.workspace = m.get_double("scene.workspace");
  c.scene.camera_elev_min_deg = m.get_double("scene.camera_elev_min_deg");
  c.scene.camera_elev_max_deg = m.get_double("scene.camera_elev_max_deg");
  c.scene.camera_dist_min = m.get_double("scene.camera_dist_min");
  c.scene.camera_dist_max = m.get_double("scene.camera_dist_max");
  c.scene.grasp_spacing = m.get_double("scene.grasp_spacing");
  c.scene.max_grasps_per_object = m.get_int("scene.max_grasps_per_object");
  c.scene.intrinsics.fx = m.get_double("camera.fx");
  c.scene.intrinsics.fy = m.get_double("camera.fy");
  c.scene.intrinsics.cx = m.get_double("camera.cx");
  c.scene.intrinsics.cy = m.get_double("camera.cy");
  c.scene.intrinsics.width = m.get_int("camera.width");
  c.scene.intrinsics.height = m.get_int("camera.height");
  c.scene.gripper.open_width = m.get_double("gripper.open_width");
  c.scene.gripper.depth = m.get_double("gripper.depth");
  c.optim.iters = m.get_int("optim.iters");
  c.optim.lr_px = m.get_double("optim.lr_px");
  c.optim.lr_logit = m.get_double("optim.lr_logit");
  c.optim.momentum = m.get_double("optim.momentum");
  const std::string miles = m.get_string("optim.milestones");
  c.optim.milestones.clear();
  for (const auto& tok : split_char(miles, ','))
    if (!tok.empty())
      c.optim.milestones.push_back(
          static_cast<int>(parse_int(tok, "optim.milestones")));
  c.optim.fresh_mc_seed = m.get_bool("optim.fresh_mc_seed");
  c.optim_init_perturb_px = m.get_double("optim.init_perturb_px");
  c.noise.sigma_px = m.get_double("noise.sigma_px");
  c.noise.outlier_fraction = m.get_double("noise.outlier_fraction");
  c.noise.outlier_px = m.get_double("noise.outlier_px");
  c.thresholds = parse_threshold_grid(m.get_string("eval.thresholds"));
  c.codec_stride = m.get_int("codec.stride");
  c.codec_threshold = m.get_double("codec.threshold");
  c.codec_top_k = m.get_int("codec.top_k");
  c.use_map_codec = m.get_bool("solve.use_map_codec");
  c.gen_num = m.get_int("gen.num");
  c.gradcheck_trials = m.get_int("gradcheck.trials");
  return c;
}

}  // namespace kgnpro
