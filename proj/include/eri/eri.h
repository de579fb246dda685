/*
 * C interface to the emotion reaction intensity library.
 *
 * Every function returns an eri_status; on failure eri_last_error() gives a
 * message for the calling thread. Objects are opaque handles released with
 * their matching *_destroy function.
 */
#ifndef ERI_ERI_H
#define ERI_ERI_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ERI_BUILDING_LIBRARY)
#    define ERI_API __declspec(dllexport)
#  else
#    define ERI_API __declspec(dllimport)
#  endif
#else
#  define ERI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define ERI_NUM_EMOTIONS 7

typedef enum eri_status {
  ERI_OK = 0,
  ERI_ERR_INVALID_ARGUMENT = 1, /* null pointer or bad handle */
  ERI_ERR_DOMAIN = 2,
  ERI_ERR_CONTRACT = 3,
  ERI_ERR_FORMAT = 4,
  ERI_ERR_IO = 5,
  ERI_ERR_NUMERIC = 6,
  ERI_ERR_USAGE = 7, /* unknown configuration key or bad value */
  ERI_ERR_INTERNAL = 8
} eri_status;

typedef enum eri_architecture {
  ERI_ARCH_CNN_LSTM = 1,
  ERI_ARCH_CNN_TRANSFORMER = 2
} eri_architecture;

ERI_API const char* eri_version(void);
ERI_API const char* eri_last_error(void);
ERI_API const char* eri_status_name(eri_status status);

/* ---- metrics ---------------------------------------------------------- */

/* Mean of squared differences over count elements. */
ERI_API eri_status eri_mse_loss(const double* pred, const double* target, size_t count, double* out);
/* Population Pearson correlation; constant input gives 0 with *degenerate = 1. */
ERI_API eri_status eri_pearson(const double* x, const double* y, size_t n, double* rho, int* degenerate);

/* ---- data ------------------------------------------------------------- */

typedef struct eri_synthetic_spec {
  size_t n_clips;
  size_t n_val;
  size_t n_test;
  size_t frames_per_video;
  size_t image_size;
  uint64_t seed;
} eri_synthetic_spec;

ERI_API void eri_synthetic_spec_init(eri_synthetic_spec* spec);
ERI_API eri_status eri_generate_synthetic(const eri_synthetic_spec* spec, const char* out_dir);

/* Samples, crops and resizes every video of a manifest into raw tensor clips. */
ERI_API eri_status eri_preprocess(const char* manifest_path, const char* out_dir, size_t clip_len, size_t image_size);

/* ---- run configuration ------------------------------------------------ */

typedef struct eri_config eri_config;

ERI_API eri_status eri_config_create(eri_config** out);
ERI_API void eri_config_destroy(eri_config* config);
/* Later settings override earlier ones. Unknown keys fail with ERI_ERR_USAGE. */
ERI_API eri_status eri_config_set(eri_config* config, const char* key, const char* value);
ERI_API eri_status eri_config_load_file(eri_config* config, const char* path);
/* Checks the whole configuration resolves. */
ERI_API eri_status eri_config_validate(const eri_config* config);

/* ---- training --------------------------------------------------------- */

typedef struct eri_epoch_record {
  size_t epoch;
  double train_loss;
  double val_loss;
  double val_pcc_mean;
  double lr;
  double seconds;
} eri_epoch_record;

typedef void (*eri_epoch_callback)(const eri_epoch_record* record, void* user_data);

/* Writes config.txt, history.csv, checkpoint.best and checkpoint.last under
 * the configured run directory. */
ERI_API eri_status eri_train(const eri_config* config, eri_epoch_callback callback, void* user_data,
                             size_t* epochs_run);

/* ---- models ----------------------------------------------------------- */

typedef struct eri_model eri_model;

ERI_API eri_status eri_model_load(const char* path, eri_model** out);
ERI_API void eri_model_destroy(eri_model* model);
ERI_API eri_status eri_model_architecture(const eri_model* model, eri_architecture* out);
/* Expected clip geometry: frames x size x size x 3. */
ERI_API eri_status eri_model_input_shape(const eri_model* model, size_t* frames, size_t* size);
/* clip: frames*size*size*3 values in [0,1], row-major; out: 7 intensities. */
ERI_API eri_status eri_model_predict(const eri_model* model, const float* clip, size_t frames, size_t height,
                                     size_t width, double out[ERI_NUM_EMOTIONS]);

/* ---- evaluation ------------------------------------------------------- */

typedef struct eri_report eri_report;

/* split: "train", "val" or "test". */
ERI_API eri_status eri_evaluate(const eri_model* model, const char* manifest_path, const char* split,
                                eri_report** out);
ERI_API eri_status eri_report_load(const char* path, eri_report** out);
ERI_API eri_status eri_report_save(const eri_report* report, const char* path);
ERI_API void eri_report_destroy(eri_report* report);
ERI_API eri_status eri_report_values(const eri_report* report, double pcc[ERI_NUM_EMOTIONS], double* pcc_mean,
                                     double* mse, size_t* n_samples);
/* Number of degenerate emotions; copies up to cap indices into idx. */
ERI_API size_t eri_report_degenerate(const eri_report* report, size_t* idx, size_t cap);

/* Markdown summary of a history CSV and an optional report (may be NULL).
 * The returned string is released with eri_string_free. */
ERI_API eri_status eri_render_report(const char* history_csv_path, const eri_report* report, char** out);
ERI_API void eri_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* ERI_ERI_H */
