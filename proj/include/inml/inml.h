#ifndef INML_INML_H
#define INML_INML_H

/* C interface to the inml compiler, emulator and evaluation harness.
 *
 * Every function returning int returns 0 on success or one of the INML_E*
 * codes. The message of the most recent failure on the calling thread is
 * available from inml_last_error(). Strings returned through char** are
 * owned by the caller and released with inml_string_free(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define INML_API __declspec(dllexport)
#else
#define INML_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum {
  INML_OK = 0,
  INML_ESCHEMA = 10,
  INML_EDOMAIN = 11,
  INML_EFEATURE = 12,
  INML_EIO = 13,
  INML_EARGUMENT = 14,
  INML_EEMPTY_DATASET = 20,
  INML_EINSUFFICIENT_CLASS_ROWS = 21,
  INML_EK_TOO_LARGE = 22,
  INML_ELABEL = 23,
  INML_ECODE_WIDTH = 30,
  INML_EBINNING_REQUIRED = 31,
  INML_EOVERFLOW = 32,
  INML_EBIN_COUNT = 33,
  INML_ESHAPE_MISMATCH = 34,
  INML_ERANGE = 35,
  INML_EPLACEMENT = 40,
  INML_EPROGRAM = 50,
  INML_EDOMAIN_TOO_LARGE = 51,
  INML_EFORMAT = 60,
  INML_ETIMESTAMP_REGRESSION = 61,
  INML_EUNKNOWN_FEATURE = 62,
  INML_EINTERNAL = 99
};

typedef struct inml_model inml_model;
typedef struct inml_program inml_program;
typedef struct inml_profile inml_profile;
typedef struct inml_dataset inml_dataset;

INML_API const char* inml_version(void);
INML_API const char* inml_last_error(void);
INML_API const char* inml_error_name(int code);
INML_API void inml_string_free(char* s);

/* Resource profiles. */
INML_API int inml_profile_default(inml_profile** out);
INML_API int inml_profile_load(const char* path, inml_profile** out);
INML_API int inml_profile_parse(const char* json, inml_profile** out);
INML_API int inml_profile_to_json(const inml_profile* p, char** out);
INML_API void inml_profile_free(inml_profile* p);

/* Datasets: CSV with a header, one column per feature, `label` last.
 * features_json (nullable) is a model-file `features` array fixing widths;
 * n_classes <= 0 infers it from the labels. */
INML_API int inml_dataset_load_csv(const char* path, const char* features_json, int n_classes, int require_label,
                                   inml_dataset** out);
INML_API int inml_dataset_parse_csv(const char* text, const char* features_json, int n_classes, int require_label,
                                    inml_dataset** out);
INML_API size_t inml_dataset_size(const inml_dataset* d);
INML_API void inml_dataset_free(inml_dataset* d);

/* Models. */
INML_API int inml_model_load(const char* path, inml_model** out);
INML_API int inml_model_parse(const char* text, inml_model** out);
INML_API int inml_model_to_json(const inml_model* m, char** out);
INML_API int inml_model_features_json(const inml_model* m, char** out);
INML_API int inml_model_validate(const inml_model* m, char** report_json);
INML_API int inml_model_predict(const inml_model* m, const uint64_t* x, size_t n, int* class_id, double* confidence);
INML_API void inml_model_free(inml_model* m);

/* kind: tree | forest | nb | kmeans. params_json (nullable): max_depth,
 * max_leaf_nodes, n_trees, bootstrap_fraction, max_features, seed, k,
 * max_iters. */
INML_API int inml_train(const inml_dataset* data, const char* kind, const char* params_json, inml_model** out);

/* Programs. options_json (nullable) is the compile-options document. */
INML_API int inml_compile(const inml_model* m, const char* options_json, inml_program** out);
INML_API int inml_program_load(const char* program_path, const char* entries_path, inml_program** out);
INML_API int inml_program_parse(const char* program_json, const char* entries_json, inml_program** out);
INML_API int inml_program_to_json(const inml_program* p, char** program_json, char** entries_json);
INML_API int inml_program_shape_hash(const inml_program* p, char** out);
INML_API int inml_program_features_json(const inml_program* p, char** out);
INML_API void inml_program_free(inml_program* p);

/* Placement and accounting. A null profile means the default one. */
INML_API int inml_place(const inml_program* p, const inml_profile* prof, char** placement_json);
INML_API int inml_report(const inml_program* p, const inml_profile* prof, int as_json, char** out);

/* Emulation. Programs are placed on an unbounded profile. */
INML_API int inml_run(const inml_program* p, const uint64_t* x, size_t n, int* class_id, double* confidence);
/* CSV "class,confidence" per row of `data` (features matched by name). */
INML_API int inml_run_batch(const inml_program* p, const inml_dataset* data, int threads, char** csv);

/* options_json (nullable): exhaustive, samples, seed, domain_guard, threads. */
INML_API int inml_check(const inml_model* m, const inml_program* p, const char* options_json, char** report_json);

/* Incremental updates. */
INML_API int inml_diff(const inml_program* old_p, const inml_program* new_p, char** diff_json);
INML_API int inml_apply_diff(const inml_program* old_p, const char* diff_json, inml_program** out);
/* Recompiles `m` with the options recorded in `old_p`; ShapeMismatch when the
 * schema changes. Writes the diff and the updated program. */
INML_API int inml_update(const inml_program* old_p, const inml_model* m, char** diff_json, inml_program** out);

/* Hybrid sweep. config_json: {"thetas": [...], "rule": "all_classes" |
 * "only_class_set", "accept_classes": [...], "confidence_bits": b, "threads": t}. */
INML_API int inml_hybrid(const inml_program* small_p, const inml_model* small_m, const inml_model* large_m,
                         const inml_dataset* data, const inml_profile* prof, const char* config_json,
                         char** report_json, char** curve_csv);

/* Throughput and size summary; `repeat` passes over the dataset. */
INML_API int inml_bench(const inml_program* p, const inml_dataset* data, const inml_profile* prof, int repeat,
                        int threads, char** report_json);

/* Trace replay. flow_json (nullable): capacity, jitter_edges_ns,
 * track_collisions. Emits a feature CSV and a JSON summary. */
INML_API int inml_extract(const char* trace_path, const char* spec_path, const char* flow_json, char** csv,
                          char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
