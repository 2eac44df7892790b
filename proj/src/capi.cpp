#include "kgnpro/kgnpro.h"

#include <cstring>
#include <string>

#include "kgnpro/config.hpp"
#include "kgnpro/error.hpp"
#include "kgnpro/pipeline.hpp"

struct kgnpro_session {
  kgnpro::ConfigMap config = kgnpro::default_config();
  std::string last_error;
  std::string last_report;
};

namespace {

kgnpro_status status_of(kgnpro::ErrorCode code) {
  using kgnpro::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
      return KGNPRO_ERR_INVALID_ARGUMENT;
    case ErrorCode::BehindCamera:
      return KGNPRO_ERR_BEHIND_CAMERA;
    case ErrorCode::LogMapSingular:
      return KGNPRO_ERR_LOG_MAP_SINGULAR;
    case ErrorCode::Underdetermined:
      return KGNPRO_ERR_UNDERDETERMINED;
    case ErrorCode::NumericalFailure:
      return KGNPRO_ERR_NUMERICAL;
    case ErrorCode::NoConvergentSolution:
      return KGNPRO_ERR_NO_CONVERGENT_SOLUTION;
    case ErrorCode::DegenerateSampleSet:
      return KGNPRO_ERR_DEGENERATE_SAMPLES;
    case ErrorCode::MissingSupervisionTarget:
      return KGNPRO_ERR_MISSING_TARGET;
    case ErrorCode::SceneTooCrowded:
      return KGNPRO_ERR_SCENE_TOO_CROWDED;
    case ErrorCode::ParseError:
      return KGNPRO_ERR_PARSE;
    case ErrorCode::UnsupportedSchema:
      return KGNPRO_ERR_UNSUPPORTED_SCHEMA;
    case ErrorCode::IoError:
      return KGNPRO_ERR_IO;
    case ErrorCode::Usage:
      return KGNPRO_ERR_USAGE;
  }
  return KGNPRO_ERR_INTERNAL;
}

template <typename Fn>
kgnpro_status guarded(kgnpro_session* s, Fn&& fn) {
  if (!s) return KGNPRO_ERR_INVALID_ARGUMENT;
  s->last_error.clear();
  try {
    fn();
    return KGNPRO_OK;
  } catch (const kgnpro::Error& e) {
    s->last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    s->last_error = e.what();
    return KGNPRO_ERR_INTERNAL;
  }
}

}  // namespace

extern "C" {

const char* kgnpro_version(void) { return "1.0.0"; }

kgnpro_status kgnpro_session_create(kgnpro_session** out) {
  if (!out) return KGNPRO_ERR_INVALID_ARGUMENT;
  try {
    *out = new kgnpro_session();
    return KGNPRO_OK;
  } catch (...) {
    *out = nullptr;
    return KGNPRO_ERR_INTERNAL;
  }
}

void kgnpro_session_destroy(kgnpro_session* s) { delete s; }

const char* kgnpro_last_error(const kgnpro_session* s) {
  return s ? s->last_error.c_str() : "null session";
}

const char* kgnpro_last_report(const kgnpro_session* s) {
  return s ? s->last_report.c_str() : "";
}

kgnpro_status kgnpro_set_option(kgnpro_session* s, const char* key,
                                const char* value) {
  return guarded(s, [&] {
    if (!key || !value)
      kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null option");
    s->config.set(key, value, kgnpro::ConfigMap::Source::Flag);
  });
}

kgnpro_status kgnpro_load_config(kgnpro_session* s, const char* path) {
  return guarded(s, [&] {
    if (!path) kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null path");
    s->config.load_file(path);
  });
}

kgnpro_status kgnpro_describe_config(kgnpro_session* s, char* buf,
                                     uint64_t size, uint64_t* needed) {
  return guarded(s, [&] {
    const std::string text = s->config.describe();
    if (needed) *needed = text.size() + 1;
    if (buf && size > 0) {
      const uint64_t n = std::min<uint64_t>(size - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

kgnpro_status kgnpro_gen(kgnpro_session* s, uint64_t num_scenes,
                         const char* out_dir, kgnpro_gen_summary* summary) {
  return guarded(s, [&] {
    if (!out_dir)
      kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null out_dir");
    const kgnpro::RunConfig cfg = kgnpro::resolve_config(s->config);
    const kgnpro::GenSummary sum =
        kgnpro::run_gen(cfg, static_cast<int>(num_scenes), out_dir);
    if (summary) {
      summary->scenes = static_cast<uint64_t>(sum.scenes);
      summary->grasps = static_cast<uint64_t>(sum.grasps);
    }
  });
}

kgnpro_status kgnpro_solve(kgnpro_session* s, const char* scenes_dir,
                           const char* out_dir,
                           kgnpro_solve_summary* summary) {
  return guarded(s, [&] {
    if (!scenes_dir || !out_dir)
      kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null path");
    const kgnpro::RunConfig cfg = kgnpro::resolve_config(s->config);
    const kgnpro::SolveSummary sum = kgnpro::run_solve(cfg, scenes_dir, out_dir);
    s->last_report = sum.log;
    if (summary) {
      summary->scenes = static_cast<uint64_t>(sum.scenes);
      summary->grasps = static_cast<uint64_t>(sum.grasps);
      summary->failed_scenes = static_cast<uint64_t>(sum.failed_scenes);
      summary->median_trans_err_m = sum.median_trans_err_m;
      summary->median_rot_err_deg = sum.median_rot_err_deg;
    }
  });
}

kgnpro_status kgnpro_train_toy(kgnpro_session* s, const char* scenes_dir,
                               const char* log_csv,
                               kgnpro_train_summary* summary) {
  return guarded(s, [&] {
    if (!scenes_dir)
      kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null scenes_dir");
    const kgnpro::RunConfig cfg = kgnpro::resolve_config(s->config);
    const kgnpro::TrainSummary sum =
        kgnpro::run_train_toy(cfg, scenes_dir, log_csv ? log_csv : "");
    if (summary) {
      summary->iterations = static_cast<uint64_t>(sum.iterations);
      summary->final_total_loss = sum.final_total;
      summary->final_median_err_cm = sum.final_median_err_cm;
      summary->final_median_err_deg = sum.final_median_err_deg;
      summary->aborted = sum.aborted ? 1 : 0;
    }
  });
}

kgnpro_status kgnpro_gradcheck(kgnpro_session* s, uint64_t trials,
                               const char* csv_path,
                               kgnpro_gradcheck_summary* summary) {
  return guarded(s, [&] {
    const kgnpro::RunConfig cfg = kgnpro::resolve_config(s->config);
    const kgnpro::GradcheckSummary sum = kgnpro::run_gradcheck(
        cfg, static_cast<int>(trials), csv_path ? csv_path : "");
    if (summary) {
      summary->coords_total = static_cast<uint64_t>(sum.coords_total);
      summary->coords_failed = static_cast<uint64_t>(sum.coords_failed);
      summary->max_rel_error = sum.max_rel_error;
      summary->frac_ok = sum.frac_ok;
    }
  });
}

kgnpro_status kgnpro_eval(kgnpro_session* s, const char* pred_dir,
                          const char* scenes_dir, const char* out_base) {
  return guarded(s, [&] {
    if (!pred_dir || !scenes_dir || !out_base)
      kgnpro::raise(kgnpro::ErrorCode::InvalidArgument, "null path");
    const kgnpro::RunConfig cfg = kgnpro::resolve_config(s->config);
    kgnpro::run_eval(cfg, pred_dir, scenes_dir, out_base);
  });
}

kgnpro_status kgnpro_selftest(kgnpro_session* s,
                              kgnpro_selftest_summary* summary) {
  return guarded(s, [&] {
    const kgnpro::SelftestResult res = kgnpro::run_selftest();
    s->last_report = res.report;
    if (summary) {
      summary->checks_run = static_cast<uint64_t>(res.run);
      summary->checks_failed = static_cast<uint64_t>(res.failed);
    }
    if (res.failed > 0)
      kgnpro::raise(kgnpro::ErrorCode::NumericalFailure,
                    std::to_string(res.failed) + " selftest checks failed");
  });
}

}  // extern "C"
