#ifndef SPECFUSE_H
#define SPECFUSE_H

/* Generated by cbindgen from specfuse-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Measurement noise model selector.
 */
typedef enum SfNoise {
  SF_NOISE_NONE = 0,
  SF_NOISE_GAUSSIAN = 1,
  SF_NOISE_POISSON = 2,
} SfNoise;

/**
 * Call outcome. Non-OK values leave a message for
 * [`sf_last_error_message`].
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_ERROR = 1,
  SF_STATUS_CONFIG = 2,
  SF_STATUS_MISSING_INPUT = 3,
  SF_STATUS_DIVERGENCE = 4,
  SF_STATUS_DATA = 5,
  SF_STATUS_NULL_ARGUMENT = 6,
  SF_STATUS_PANIC = 7,
} SfStatus;

/**
 * Opaque spectral cube handle.
 */
typedef struct SfCube SfCube;

/**
 * Opaque dual-arm aperture design handle.
 */
typedef struct SfDesign SfDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread. Never null.
 */
const char *sf_last_error_message(void);

/**
 * Builds a rows x cols x bands cube from `data`, which holds
 * rows*cols*bands values ordered band by band, each band column-major.
 */
enum SfStatus sf_cube_create(uintptr_t rows,
                             uintptr_t cols,
                             uintptr_t bands,
                             const double *data,
                             struct SfCube **out);

/**
 * Reads the cube's dimensions. Any of the three out pointers may be null.
 */
enum SfStatus sf_cube_dims(const struct SfCube *cube,
                           uintptr_t *rows,
                           uintptr_t *cols,
                           uintptr_t *bands);

/**
 * Copies the cube's values into `out`, which must hold exactly `len`
 * doubles with len = rows*cols*bands.
 */
enum SfStatus sf_cube_copy_data(const struct SfCube *cube, double *out, uintptr_t len);

/**
 * Releases a cube handle. Null is ignored.
 */
void sf_cube_free(struct SfCube *cube);

/**
 * Designs dual-arm filter banks and coded apertures for a rows x cols x
 * bands scene with spectral factor `q` and spatial factor `p`.
 */
enum SfStatus sf_design_create(uintptr_t rows,
                               uintptr_t cols,
                               uintptr_t bands,
                               uintptr_t q,
                               uintptr_t p,
                               uint64_t seed,
                               struct SfDesign **out);

/**
 * Reads the design's feature band count and per-arm snapshot counts. Any
 * out pointer may be null.
 */
enum SfStatus sf_design_dims(const struct SfDesign *design,
                             uintptr_t *feature_bands,
                             uintptr_t *hs_snapshots,
                             uintptr_t *ms_snapshots);

/**
 * Releases a design handle. Null is ignored.
 */
void sf_design_free(struct SfDesign *design);

/**
 * Measures `scene` through both arms of `design`. `snr_db` is ignored for
 * `SF_NOISE_NONE`. On success `y_ms` is a rows x cols x W cube and `y_hs`
 * a (rows/p) x (cols/p) x K cube.
 */
enum SfStatus sf_simulate(const struct SfDesign *design,
                          const struct SfCube *scene,
                          enum SfNoise noise,
                          double snr_db,
                          uint64_t seed,
                          struct SfCube **y_ms,
                          struct SfCube **y_hs);

/**
 * Reconstructs the fused feature cube from dual-arm measurements. Pass a
 * negative or NaN `lambda1` to use the measurement-scaled default.
 * `iterations` may be null; on success it receives the iteration count.
 */
enum SfStatus sf_fuse(const struct SfDesign *design,
                      const struct SfCube *y_ms,
                      const struct SfCube *y_hs,
                      double lambda1,
                      double lambda2,
                      uintptr_t max_iters,
                      uint32_t wavelet_levels,
                      struct SfCube **features,
                      uintptr_t *iterations);

/**
 * Runs the full design/simulate/fuse/classify pipeline from a TOML config
 * file. `out_dir` (optional, may be null) overrides the configured output
 * directory; `overall_accuracy` (optional) receives the held-out score.
 */
enum SfStatus sf_run_pipeline(const char *config_path,
                              const char *out_dir,
                              double *overall_accuracy);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SPECFUSE_H */
