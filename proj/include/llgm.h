#ifndef LLGM_H
#define LLGM_H

/* C interface to the Gaussian-mixture image codec and low-light enhancer.
 *
 * Stage 1 fits an image as optimized 2D Gaussian primitives (a multi-scale
 * .llgm model); stage 2 enhances a low-light image by optimizing per-primitive
 * curve-mixing logits against a curve dictionary (.llgd) and splatting them
 * into a per-pixel gain map.
 *
 * All functions returning llgm_status set a thread-local message retrievable
 * via llgm_last_error() on failure. Out-parameters are written only on
 * LLGM_OK. Handles are freed with their matching *_free function; passing
 * NULL to a *_free is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LLGM_API __declspec(dllexport)
#else
#define LLGM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum llgm_status {
    LLGM_OK = 0,
    LLGM_ERROR_IO = 1,
    LLGM_ERROR_FORMAT = 2,
    LLGM_ERROR_INVALID_ARGUMENT = 3,
    LLGM_ERROR_INCOMPATIBLE = 4,
    LLGM_ERROR_INTERNAL = 5
} llgm_status;

/* Message for the most recent failure on the calling thread; never NULL. */
LLGM_API const char* llgm_last_error(void);

/* Caps the tile-parallel worker count; n <= 0 restores hardware default. */
LLGM_API void llgm_set_threads(int n);

typedef struct llgm_image llgm_image;
typedef struct llgm_model llgm_model;
typedef struct llgm_dictionary llgm_dictionary;
typedef struct llgm_enhance_result llgm_enhance_result;

/* ---------- images (row-major float intensities in [0, 1]) ---------- */

LLGM_API llgm_status llgm_image_load(const char* path, llgm_image** out);
LLGM_API llgm_status llgm_image_save(const llgm_image* img, const char* path);
LLGM_API llgm_status llgm_image_create(int height, int width, int channels, const float* data,
                                       llgm_image** out);
LLGM_API void llgm_image_free(llgm_image* img);

LLGM_API int llgm_image_height(const llgm_image* img);
LLGM_API int llgm_image_width(const llgm_image* img);
LLGM_API int llgm_image_channels(const llgm_image* img);
/* Borrowed pointer, valid until the image is freed. */
LLGM_API const float* llgm_image_data(const llgm_image* img);

/* ---------- stage 1: fitting ---------- */

typedef struct llgm_fit_options {
    int num_primitives;
    int scales;
    int iterations;
    double lr;
    double ssim_weight;
    uint64_t seed;
    const char* log_csv; /* optional per-iteration trace path, NULL disables */
} llgm_fit_options;

LLGM_API void llgm_fit_options_init(llgm_fit_options* opts);

/* Fits img; writes the model and, when non-NULL, the clamped reconstruction
 * and its PSNR against img. */
LLGM_API llgm_status llgm_fit(const llgm_image* img, const llgm_fit_options* opts,
                              llgm_model** out_model, llgm_image** out_render, double* out_psnr);

LLGM_API llgm_status llgm_model_load(const char* path, llgm_model** out);
LLGM_API llgm_status llgm_model_save(const llgm_model* model, const char* path);
LLGM_API void llgm_model_free(llgm_model* model);

LLGM_API int llgm_model_levels(const llgm_model* model);
LLGM_API int llgm_model_primitives(const llgm_model* model);

/* ---------- curve dictionary ---------- */

typedef struct llgm_dict_options {
    int k;     /* learned atoms */
    int order; /* curve order */
    const double* e_targets; /* NULL -> {0.4, 0.5, 0.6, 0.7} */
    size_t e_target_count;
    uint64_t seed;
    const char* corpus_tag;     /* NULL -> "" */
    const char* export_csv_dir; /* optional coefficient/curve CSV dump dir */
} llgm_dict_options;

LLGM_API void llgm_dict_options_init(llgm_dict_options* opts);

/* Builds a dictionary from image files; unreadable files are skipped with a
 * warning on stderr. out_inertia (nullable) receives the final clustering
 * inertia. */
LLGM_API llgm_status llgm_dict_build(const char* const* image_paths, size_t path_count,
                                     const llgm_dict_options* opts, llgm_dictionary** out,
                                     double* out_inertia);

LLGM_API llgm_status llgm_dict_load(const char* path, llgm_dictionary** out);
LLGM_API llgm_status llgm_dict_save(const llgm_dictionary* dict, const char* path);
LLGM_API void llgm_dict_free(llgm_dictionary* dict);

LLGM_API int llgm_dict_atoms(const llgm_dictionary* dict); /* learned atoms K */
LLGM_API int llgm_dict_order(const llgm_dictionary* dict);

/* ---------- stage 2: enhancement ---------- */

typedef struct llgm_enhance_options {
    int iterations;
    double lr;
    double e_target;
    double blur_sigma; /* 0 -> 0.05 * min(height, width) */
    uint64_t seed;
    const char* log_csv; /* optional loss-trace path, NULL disables */
} llgm_enhance_options;

LLGM_API void llgm_enhance_options_init(llgm_enhance_options* opts);

LLGM_API llgm_status llgm_enhance(const llgm_image* img, const llgm_model* model,
                                  const llgm_dictionary* dict, const llgm_enhance_options* opts,
                                  llgm_enhance_result** out);

LLGM_API void llgm_enhance_result_free(llgm_enhance_result* res);

/* Each accessor returns a fresh image the caller frees. */
LLGM_API llgm_status llgm_enhance_result_output(const llgm_enhance_result* res, llgm_image** out);
LLGM_API llgm_status llgm_enhance_result_gain(const llgm_enhance_result* res, llgm_image** out);
LLGM_API llgm_status llgm_enhance_result_weights(const llgm_enhance_result* res, llgm_image** out);
LLGM_API double llgm_enhance_result_final_loss(const llgm_enhance_result* res);
LLGM_API double llgm_enhance_result_bias(const llgm_enhance_result* res, int channel);

/* ---------- metrics ---------- */

typedef struct llgm_metrics {
    double psnr; /* valid iff has_psnr */
    double ssim; /* valid iff has_ssim */
    double loe;  /* valid iff has_loe */
    double de;
    double eme;
    int has_psnr;
    int has_ssim;
    int has_loe;
} llgm_metrics;

/* Full-reference entries are filled only when ref is non-NULL. */
LLGM_API llgm_status llgm_evaluate(const llgm_image* pred, const llgm_image* ref, uint64_t seed,
                                   llgm_metrics* out);

/* ---------- gradient check ---------- */

typedef struct llgm_gradcheck_entry {
    char name[32];
    double max_error;
    int pass;
} llgm_gradcheck_entry;

/* Writes up to capacity entries; out_count receives the total class count and
 * out_pass whether every class passed. */
LLGM_API llgm_status llgm_gradcheck(uint64_t seed, llgm_gradcheck_entry* entries, size_t capacity,
                                    size_t* out_count, int* out_pass);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LLGM_H */
