/* C interface to the prosteval library. All functions return a pe_status;
 * on failure pe_last_error() holds a message for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * pe_free_string. Handles are released with their matching *_free. */
#ifndef PROSTEVAL_H
#define PROSTEVAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(PROSTEVAL_BUILDING)
#define PE_API __attribute__((visibility("default")))
#else
#define PE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pe_status {
  PE_OK = 0,
  PE_ERR_INTERNAL = 1,
  PE_ERR_CONFIG = 2,
  PE_ERR_DATA = 3,
  PE_ERR_DEGENERATE = 4
} pe_status;

typedef enum pe_volume_kind { PE_KIND_INTENSITY = 0, PE_KIND_LABEL = 1, PE_KIND_PROBABILITY = 2 } pe_volume_kind;
typedef enum pe_map_kind { PE_MAP_GS = 0, PE_MAP_CS = 1 } pe_map_kind;

typedef struct pe_volume pe_volume;
typedef struct pe_probstack pe_probstack;

PE_API const char* pe_version(void);
PE_API const char* pe_last_error(void);
PE_API void pe_free_string(char* s);

/* Volumes. `path` is the file stem: <path>.vol.json + <path>.vol.raw. */
PE_API pe_status pe_volume_read(const char* path, pe_volume** out);
PE_API pe_status pe_volume_write(const pe_volume* v, const char* path);
PE_API pe_status pe_volume_create(const int dims[3], const double spacing_mm[3], pe_volume_kind kind,
                                  const float* values, pe_volume** out);
PE_API pe_status pe_volume_info(const pe_volume* v, int dims[3], double spacing_mm[3], pe_volume_kind* kind);
/* Borrowed pointer valid until pe_volume_free. */
PE_API const float* pe_volume_data(const pe_volume* v, size_t* count);
PE_API void pe_volume_free(pe_volume* v);

/* Six softmax channels, read from <prefix>_c0 .. <prefix>_c5. */
PE_API pe_status pe_probstack_read(const char* prefix, pe_probstack** out);
PE_API pe_status pe_probstack_create(const pe_volume* const channels[6], pe_probstack** out);
PE_API void pe_probstack_free(pe_probstack* s);

/* Resample in plane to spacing (tx, ty), crop (w, h) about the center, then
 * min-max normalize (slice_scope != 0 normalizes per slice). Label volumes
 * use nearest neighbour and skip normalization. */
PE_API pe_status pe_preprocess(const pe_volume* in, const double target_spacing_mm[3], int crop_w, int crop_h,
                               int slice_scope, pe_volume** out);
PE_API pe_status pe_label_from_probs(const pe_probstack* probs, pe_volume** out);

/* JSON array of clusters. `probs` may be NULL, then every score is 1. */
PE_API pe_status pe_cluster_json(const pe_volume* labels, const pe_probstack* probs, int connectivity,
                                 double min_volume_mm3, pe_map_kind map, char** json_out);

/* Detection records CSV for one patient. `options_json` takes the
 * evaluation config keys (connectivity, min_volume_mm3, overlap_frac,
 * overlap_denominator, strict_duplicates, grading_score_threshold); NULL
 * keeps the defaults. */
PE_API pe_status pe_match_csv(const pe_volume* gt_labels, const pe_probstack* probs, const char* options_json,
                              const char* patient_id, int fold, char** csv_out);

/* Kappa JSON from a detection records CSV. unit: 0 lesion, 1 patient. */
PE_API pe_status pe_kappa_json(const char* records_csv, int include_fn_as_gs6, int bootstrap_iterations,
                               uint64_t seed, int unit, char** json_out);

PE_API pe_status pe_dice(const pe_volume* a, const pe_volume* b, double* out);

/* One-sided Wilcoxon signed-rank test of x > y. */
PE_API pe_status pe_wilcoxon_one_sided(const double* x, const double* y, size_t n, double* p_value,
                                       double* statistic, size_t* n_used, int* exact);

/* Cohort-level operations driven by an evaluation config JSON. Relative
 * paths inside the config resolve against `base_dir` (may be NULL). */
PE_API pe_status pe_evaluate(const char* config_json, const char* base_dir, char** report_json);
/* grade NULL selects the CS curve; otherwise a grade name such as "GS3+4". */
PE_API pe_status pe_froc_csv(const char* config_json, const char* base_dir, const char* grade, char** csv_out);
PE_API pe_status pe_px2(const char* config_json, const char* base_dir, const char* points_csv_path, char** json_out);

/* Writes a phantom cohort into out_dir and returns its ledger JSON. */
PE_API pe_status pe_phantom_generate(const char* config_json, const char* out_dir, char** ledger_json);

/* Finite-difference check of the loss and attention gradients. */
PE_API pe_status pe_losscheck(uint64_t seed, int instances, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
