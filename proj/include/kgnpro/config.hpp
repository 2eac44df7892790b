#pragma once

#include <map>
#include <string>
#include <vector>

#include "kgnpro/matching.hpp"
#include "kgnpro/metrics.hpp"
#include "kgnpro/prob_pnp.hpp"
#include "kgnpro/scene.hpp"
#include "kgnpro/trainer.hpp"

namespace kgnpro {

// Flat key=value store with section-prefixed keys (solver.max_iters=100) and
// per-key provenance. Later layers override earlier ones.
class ConfigMap {
 public:
  enum class Source { Default, File, Flag };

  void set(const std::string& key, const std::string& value, Source source);
  // key=value lines, '#' comments. Keys must already exist as defaults.
  void load_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // "key=value  (default|file|flag)" lines, sorted by key.
  std::string describe() const;

 private:
  struct Entry {
    std::string value;
    Source source = Source::Default;
  };
  std::map<std::string, Entry> entries_;
};

// Fully resolved run configuration.
struct RunConfig {
  std::uint64_t seed = 0;
  SolverConfig solver;
  MCConfig mc;
  PoseDistanceParams match;
  LossWeights loss;
  SceneConfig scene;
  OptimConfig optim;
  double optim_init_perturb_px = 0.0;  // >0: init keypoints at GT +- this
  NoiseModel noise;
  std::vector<SuccessThresholds> thresholds;
  int codec_stride = 4;
  double codec_threshold = 0.3;
  int codec_top_k = 100;
  bool use_map_codec = false;
  int gen_num = 10;
  int gradcheck_trials = 100;
};

ConfigMap default_config();
RunConfig resolve_config(const ConfigMap& map);

}  // namespace kgnpro
