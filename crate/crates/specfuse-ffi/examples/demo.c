/* Dual-arm acquisition and fusion driven from C.
 *
 * Build (from the workspace root, after `cargo build --release`):
 *   cc crates/specfuse-ffi/examples/demo.c \
 *      -Icrates/specfuse-ffi/include -Ltarget/release -lspecfuse_ffi -lm \
 *      -o demo
 *   LD_LIBRARY_PATH=target/release ./demo
 */

#include <stdio.h>
#include <stdlib.h>

#include "specfuse.h"

#define ROWS 16
#define COLS 16
#define BANDS 8

static int check(SfStatus status, const char *what) {
  if (status != SF_STATUS_OK) {
    fprintf(stderr, "%s failed (%d): %s\n", what, (int)status,
            sf_last_error_message());
    return 1;
  }
  return 0;
}

int main(void) {
  double *scene_data = malloc(sizeof(double) * ROWS * COLS * BANDS);
  if (!scene_data) return 1;
  /* Smooth synthetic radiance: two spatial bumps with band-dependent mix. */
  for (size_t b = 0; b < BANDS; b++)
    for (size_t c = 0; c < COLS; c++)
      for (size_t r = 0; r < ROWS; r++)
        scene_data[b * ROWS * COLS + c * ROWS + r] =
            1.0 + 0.5 * (double)r / ROWS + 0.25 * (double)(c * b) / (COLS * BANDS);

  SfCube *scene = NULL;
  SfDesign *design = NULL;
  SfCube *y_ms = NULL, *y_hs = NULL, *features = NULL;
  int rc = 1;

  if (check(sf_cube_create(ROWS, COLS, BANDS, scene_data, &scene), "cube"))
    goto done;
  if (check(sf_design_create(ROWS, COLS, BANDS, 2, 2, 42, &design), "design"))
    goto done;

  size_t k, hs_snaps, ms_snaps;
  sf_design_dims(design, &k, &hs_snaps, &ms_snaps);
  printf("design: %zu feature bands, %zu hs + %zu ms snapshots\n", k, hs_snaps,
         ms_snaps);

  if (check(sf_simulate(design, scene, SF_NOISE_GAUSSIAN, 30.0, 7, &y_ms, &y_hs),
            "simulate"))
    goto done;

  size_t iterations = 0;
  if (check(sf_fuse(design, y_ms, y_hs, -1.0, 5e-4, 300, 2, &features,
                    &iterations),
            "fuse"))
    goto done;

  size_t fr, fc, fb;
  sf_cube_dims(features, &fr, &fc, &fb);
  printf("fused %zux%zux%zu feature cube in %zu iterations\n", fr, fc, fb,
         iterations);
  rc = 0;

done:
  sf_cube_free(features);
  sf_cube_free(y_hs);
  sf_cube_free(y_ms);
  sf_design_free(design);
  sf_cube_free(scene);
  free(scene_data);
  return rc;
}
