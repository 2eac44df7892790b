/* kgnpro.h
 *
 * C interface of the kgnpro shared library: keypoint-based grasp pose
 * estimation with a probabilistic PnP layer, synthetic primitive scenes and
 * grasp metrics. All state lives behind an opaque session handle; every call
 * returns a status code and leaves a readable message in the session.
 */

#ifndef KGNPRO_H
#define KGNPRO_H

#include <stdint.h>

#if defined(_WIN32)
#define KGNPRO_API __declspec(dllexport)
#else
#define KGNPRO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kgnpro_status {
  KGNPRO_OK = 0,
  KGNPRO_ERR_INVALID_ARGUMENT = 1,
  KGNPRO_ERR_BEHIND_CAMERA = 2,
  KGNPRO_ERR_LOG_MAP_SINGULAR = 3,
  KGNPRO_ERR_UNDERDETERMINED = 4,
  KGNPRO_ERR_NUMERICAL = 5,
  KGNPRO_ERR_NO_CONVERGENT_SOLUTION = 6,
  KGNPRO_ERR_DEGENERATE_SAMPLES = 7,
  KGNPRO_ERR_MISSING_TARGET = 8,
  KGNPRO_ERR_SCENE_TOO_CROWDED = 9,
  KGNPRO_ERR_PARSE = 10,
  KGNPRO_ERR_UNSUPPORTED_SCHEMA = 11,
  KGNPRO_ERR_IO = 12,
  KGNPRO_ERR_USAGE = 13,
  KGNPRO_ERR_INTERNAL = 14
} kgnpro_status;

typedef struct kgnpro_session kgnpro_session;

KGNPRO_API const char* kgnpro_version(void);

KGNPRO_API kgnpro_status kgnpro_session_create(kgnpro_session** out);
KGNPRO_API void kgnpro_session_destroy(kgnpro_session* s);

/* Message of the last failed call on this session; empty string otherwise.
 * The pointer stays valid until the next call on the session. */
KGNPRO_API const char* kgnpro_last_error(const kgnpro_session* s);

/* Configuration: flat section.key keys ("solver.max_iters", "seed", ...).
 * Defaults < config file < explicit options, in call order. */
KGNPRO_API kgnpro_status kgnpro_set_option(kgnpro_session* s, const char* key,
                                           const char* value);
KGNPRO_API kgnpro_status kgnpro_load_config(kgnpro_session* s,
                                            const char* path);

/* Resolved configuration with per-key provenance, one key=value line each.
 * Writes up to `size` bytes including the terminator; *needed receives the
 * full required size. */
KGNPRO_API kgnpro_status kgnpro_describe_config(kgnpro_session* s, char* buf,
                                                uint64_t size,
                                                uint64_t* needed);

typedef struct kgnpro_gen_summary {
  uint64_t scenes;
  uint64_t grasps;
} kgnpro_gen_summary;

/* Writes scene_%04d.txt files into out_dir. */
KGNPRO_API kgnpro_status kgnpro_gen(kgnpro_session* s, uint64_t num_scenes,
                                    const char* out_dir,
                                    kgnpro_gen_summary* summary);

typedef struct kgnpro_solve_summary {
  uint64_t scenes;
  uint64_t grasps;
  uint64_t failed_scenes;
  double median_trans_err_m;
  double median_rot_err_deg;
} kgnpro_solve_summary;

/* Observes and solves every scene in scenes_dir, writing <stem>.poses.txt
 * files into out_dir. Per-scene failures are counted, not fatal. */
KGNPRO_API kgnpro_status kgnpro_solve(kgnpro_session* s,
                                      const char* scenes_dir,
                                      const char* out_dir,
                                      kgnpro_solve_summary* summary);

typedef struct kgnpro_train_summary {
  uint64_t iterations;
  double final_total_loss;
  double final_median_err_cm;
  double final_median_err_deg;
  int aborted;
} kgnpro_train_summary;

/* log_csv may be NULL to skip the per-iteration log. */
KGNPRO_API kgnpro_status kgnpro_train_toy(kgnpro_session* s,
                                          const char* scenes_dir,
                                          const char* log_csv,
                                          kgnpro_train_summary* summary);

typedef struct kgnpro_gradcheck_summary {
  uint64_t coords_total;
  uint64_t coords_failed;
  double max_rel_error;
  double frac_ok;
} kgnpro_gradcheck_summary;

/* csv_path may be NULL. */
KGNPRO_API kgnpro_status kgnpro_gradcheck(kgnpro_session* s, uint64_t trials,
                                          const char* csv_path,
                                          kgnpro_gradcheck_summary* summary);

/* Writes <out_base>.csv and <out_base>.txt. */
KGNPRO_API kgnpro_status kgnpro_eval(kgnpro_session* s, const char* pred_dir,
                                     const char* scenes_dir,
                                     const char* out_base);

typedef struct kgnpro_selftest_summary {
  uint64_t checks_run;
  uint64_t checks_failed;
} kgnpro_selftest_summary;

/* Fixed battery of analytic fixture checks; the per-check report is
 * available through kgnpro_last_report(). */
KGNPRO_API kgnpro_status kgnpro_selftest(kgnpro_session* s,
                                         kgnpro_selftest_summary* summary);

/* Human-readable report of the last selftest/solve call on this session. */
KGNPRO_API const char* kgnpro_last_report(const kgnpro_session* s);

#ifdef __cplusplus
}
#endif

#endif /* KGNPRO_H */
