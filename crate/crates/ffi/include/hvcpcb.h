#ifndef HVCPCB_H
#define HVCPCB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HvcpcbStatus {
  HVCPCB_STATUS_OK = 0,
  HVCPCB_STATUS_NULL_POINTER = 1,
  HVCPCB_STATUS_INVALID_ARGUMENT = 2,
  HVCPCB_STATUS_IO = 3,
  HVCPCB_STATUS_CHECKPOINT = 4,
  HVCPCB_STATUS_IMAGE_SIZE = 5,
  HVCPCB_STATUS_MEASUREMENT = 6,
  HVCPCB_STATUS_STATISTICS = 7,
  HVCPCB_STATUS_INTERNAL = 8,
} HvcpcbStatus;

/**
 * Opaque trained model.
 */
typedef struct HvcpcbModel HvcpcbModel;

typedef struct HvcpcbPose {
  /**
   * Degrees, positive for left rotations.
   */
  double theta_deg;
  /**
   * `(w_bottom - w_top) / w_top`.
   */
  double ratio;
} HvcpcbPose;

typedef struct HvcpcbWelch {
  double t;
  double df;
  double p_value;
  /**
   * Both samples had zero variance.
   */
  bool degenerate;
} HvcpcbWelch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *hvcpcb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hvcpcb_version(void);

/**
 * Loads a checkpoint written by `hvcpcb`.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 * The model written to `*out` must be released with [`hvcpcb_model_free`].
 */
enum HvcpcbStatus hvcpcb_model_load(const char *path, struct HvcpcbModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`hvcpcb_model_load`] and not be used afterwards.
 */
void hvcpcb_model_free(struct HvcpcbModel *model);

/**
 * Number of classes, or 0 for a null model.
 *
 * # Safety
 * `model` must be null or a live model.
 */
size_t hvcpcb_model_num_classes(const struct HvcpcbModel *model);

/**
 * Expected square input side and channel count.
 *
 * # Safety
 * `model` must be a live model; `size` and `channels` valid pointers.
 */
enum HvcpcbStatus hvcpcb_model_input_shape(const struct HvcpcbModel *model,
                                           size_t *size,
                                           size_t *channels);

/**
 * Classifies one image. `logits` may be null; otherwise it receives
 * `logits_len` values, which must equal the class count.
 *
 * # Safety
 * `pixels` must hold `width * height * channels` floats; `class_out` must
 * be valid; `logits`, when non-null, must hold `logits_len` floats.
 */
enum HvcpcbStatus hvcpcb_model_predict(const struct HvcpcbModel *model,
                                       const float *pixels,
                                       size_t width,
                                       size_t height,
                                       size_t channels,
                                       size_t *class_out,
                                       float *logits,
                                       size_t logits_len);

/**
 * Measures in-plane rotation and bottom/top width ratio of a board image
 * with the default detector settings.
 *
 * # Safety
 * `pixels` must hold `width * height * channels` floats; `out` must be
 * valid.
 */
enum HvcpcbStatus hvcpcb_measure_pose(const float *pixels,
                                      size_t width,
                                      size_t height,
                                      size_t channels,
                                      struct HvcpcbPose *out);

/**
 * Two-sided Welch t-test between two samples of at least two values.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` doubles; `out` must be valid.
 */
enum HvcpcbStatus hvcpcb_welch_t_test(const double *a,
                                      size_t na,
                                      const double *b,
                                      size_t nb,
                                      struct HvcpcbWelch *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HVCPCB_H */
