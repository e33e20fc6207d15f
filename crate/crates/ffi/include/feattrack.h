#ifndef FEATTRACK_H
#define FEATTRACK_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FtDictUpdate {
  FT_DICT_UPDATE_OFF = 0,
  FT_DICT_UPDATE_TRIGGERED = 1,
  FT_DICT_UPDATE_ALWAYS = 2,
} FtDictUpdate;

typedef enum FtEncoder {
  FT_ENCODER_SOFT_THRESHOLD = 0,
  FT_ENCODER_TRIANGLE_KMEANS = 1,
  FT_ENCODER_SOFT_ASSIGNMENT = 2,
  FT_ENCODER_LOCALIZED_SOFT_ASSIGNMENT = 3,
  FT_ENCODER_SPARSE_CODING = 4,
} FtEncoder;

typedef enum FtStatus {
  FT_STATUS_OK = 0,
  FT_STATUS_NULL_POINTER = 1,
  FT_STATUS_INVALID_ARGUMENT = 2,
  FT_STATUS_TRACKING_FAILED = 3,
  FT_STATUS_PANIC = 4,
} FtStatus;

/**
 * Opaque tracker handle.
 */
typedef struct FtTracker FtTracker;

/**
 * Subset of the tracker configuration exposed over the ABI.
 */
typedef struct FtConfig {
  /**
   * One of `FtEncoder`.
   */
  uint32_t encoder;
  /**
   * One of `FtDictUpdate`.
   */
  uint32_t dict_update;
  uint32_t dict_size;
  double gamma;
  uint64_t seed;
} FtConfig;

/**
 * Axis-aligned box, top-left origin, 0-based pixels.
 */
typedef struct FtBox {
  int32_t x;
  int32_t y;
  int32_t w;
  int32_t h;
} FtBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default configuration: soft-threshold encoder, triggered updates,
 * 100 bases, gamma 0.01, seed 0.
 */
struct FtConfig ft_config_default(void);

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next `ft_*` call on the same thread.
 */
const char *ft_last_error(void);

/**
 * Learns the initial dictionary and model from the first frame.
 *
 * `config` may be null for defaults. On success `*out` receives a handle
 * that must be released with `ft_tracker_free`.
 *
 * # Safety
 * `pixels` must be readable for `stride * (height - 1) + width` bytes,
 * `config` must be null or valid, and `out` must be writable.
 */
enum FtStatus ft_tracker_new(const struct FtConfig *config,
                             const uint8_t *pixels,
                             size_t width,
                             size_t height,
                             size_t stride,
                             struct FtBox init,
                             struct FtTracker **out);

/**
 * Tracks the target into the next frame. `out_box` and `out_score` may be null.
 *
 * # Safety
 * `tracker` must come from `ft_tracker_new`; the buffer rules of
 * `ft_tracker_new` apply; non-null outputs must be writable.
 */
enum FtStatus ft_tracker_step(struct FtTracker *tracker,
                              const uint8_t *pixels,
                              size_t width,
                              size_t height,
                              size_t stride,
                              struct FtBox *out_box,
                              double *out_score);

/**
 * Current box estimate.
 *
 * # Safety
 * `tracker` must come from `ft_tracker_new`; `out` must be writable.
 */
enum FtStatus ft_tracker_box(const struct FtTracker *tracker, struct FtBox *out);

/**
 * Number of dictionary updates so far, or 0 for a null handle.
 *
 * # Safety
 * `tracker` must be null or come from `ft_tracker_new`.
 */
uint64_t ft_tracker_update_count(const struct FtTracker *tracker);

/**
 * Releases a tracker. Null is ignored.
 *
 * # Safety
 * `tracker` must be null or come from `ft_tracker_new`, and not be used again.
 */
void ft_tracker_free(struct FtTracker *tracker);

/**
 * Overlap ratio (intersection over union) of two boxes.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtStatus ft_vor(struct FtBox a, struct FtBox b, double *out);

/**
 * Euclidean distance between box centers.
 *
 * # Safety
 * `out` must be writable.
 */
enum FtStatus ft_cle(struct FtBox a, struct FtBox b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEATTRACK_H */
