/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef PLUME_H
#define PLUME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum PlumeStatus {
  PlumeStatus_Ok = 0,
  PlumeStatus_NullPointer = 1,
  PlumeStatus_InvalidShape = 2,
  PlumeStatus_ShapeMismatch = 3,
  PlumeStatus_Domain = 4,
  PlumeStatus_Numeric = 5,
  PlumeStatus_Panic = 6,
} PlumeStatus;

/**
 * Opaque tensor handle.
 */
typedef struct PlumeTensor PlumeTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *plume_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated when `len > 0`). Returns the full message length excluding
 * the terminator, or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t plume_last_error_message(char *buf, size_t len);

/**
 * Allocates a zero tensor.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum PlumeStatus plume_tensor_zeros(size_t batch,
                                    size_t channels,
                                    size_t height,
                                    size_t width,
                                    struct PlumeTensor **out);

/**
 * Allocates a tensor initialised from `len` values at `data`.
 *
 * # Safety
 * `data` must point to `len` readable floats; `out` to a handle slot.
 */
enum PlumeStatus plume_tensor_from_data(size_t batch,
                                        size_t channels,
                                        size_t height,
                                        size_t width,
                                        const float *data,
                                        size_t len,
                                        struct PlumeTensor **out);

/**
 * Releases a handle. Null is accepted and ignored.
 *
 * # Safety
 * `t` must be null or a live handle from this library, freed at most once.
 */
void plume_tensor_free(struct PlumeTensor *t);

/**
 * Writes (batch, channels, height, width) into `dims[0..4]`.
 *
 * # Safety
 * `t` must be a live handle and `dims` point to 4 writable values.
 */
enum PlumeStatus plume_tensor_shape(const struct PlumeTensor *t, size_t *dims);

/**
 * Number of elements, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t plume_tensor_len(const struct PlumeTensor *t);

/**
 * Copies all elements into `buf`, which must hold exactly `len` values.
 *
 * # Safety
 * `t` must be a live handle and `buf` point to `len` writable floats.
 */
enum PlumeStatus plume_tensor_read(const struct PlumeTensor *t, float *buf, size_t len);

/**
 * Overwrites all elements from `buf`, which must hold exactly `len` values.
 *
 * # Safety
 * `t` must be a live handle and `buf` point to `len` readable floats.
 */
enum PlumeStatus plume_tensor_write(struct PlumeTensor *t, const float *buf, size_t len);

/**
 * Orthonormal 2D DCT-II of every plane.
 *
 * # Safety
 * `x` must be a live handle; `out` a handle slot.
 */
enum PlumeStatus plume_dct2(const struct PlumeTensor *x, struct PlumeTensor **out);

/**
 * Inverse of [`plume_dct2`].
 *
 * # Safety
 * `coeffs` must be a live handle; `out` a handle slot.
 */
enum PlumeStatus plume_idct2(const struct PlumeTensor *coeffs, struct PlumeTensor **out);

/**
 * Periodic convection-diffusion solution at time `t`.
 *
 * # Safety
 * `u0` must be a live handle; `out` a handle slot.
 */
enum PlumeStatus plume_spectral_solve(const struct PlumeTensor *u0,
                                      double diffusion,
                                      double vx,
                                      double vy,
                                      double t,
                                      struct PlumeTensor **out);

/**
 * Fused edge map with fusion weight `alpha` in [0, 1]; 1 selects the
 * normalised gradient alone and 0 the phase congruency alone.
 *
 * # Safety
 * `x` must be a live handle; `out` a handle slot.
 */
enum PlumeStatus plume_edge_map(const struct PlumeTensor *x,
                                double alpha,
                                struct PlumeTensor **out);

/**
 * Forward pass of a seeded gas block with initial decay rate `alpha_decay`.
 * `edge` supplies the gating prior and may have any channel count.
 *
 * # Safety
 * `x` and `edge` must be live handles; `out` a handle slot.
 */
enum PlumeStatus plume_gas_block_forward(const struct PlumeTensor *x,
                                         const struct PlumeTensor *edge,
                                         uint64_t seed,
                                         double alpha_decay,
                                         struct PlumeTensor **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLUME_H */
