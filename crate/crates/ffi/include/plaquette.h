#ifndef PLAQUETTE_H
#define PLAQUETTE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlqStatus {
  PLQ_STATUS_OK = 0,
  PLQ_STATUS_INVALID_ARGUMENT = 1,
  PLQ_STATUS_DIMENSION_MISMATCH = 2,
  PLQ_STATUS_GEOMETRY = 3,
  PLQ_STATUS_NOT_A_CYCLE = 4,
  PLQ_STATUS_TOO_LARGE = 5,
  PLQ_STATUS_UNSUPPORTED = 6,
  PLQ_STATUS_PRECONDITION = 7,
  PLQ_STATUS_CONFIG = 8,
  PLQ_STATUS_IO = 9,
  PLQ_STATUS_NULL_POINTER = 10,
  PLQ_STATUS_PANIC = 11,
} PlqStatus;

/**
 * Boundary conditions as passed across the ABI.
 */
typedef enum PlqBoundary {
  PLQ_BOUNDARY_FREE = 0,
  PLQ_BOUNDARY_WIRED = 1,
  PLQ_BOUNDARY_CLOSED = 2,
} PlqBoundary;

/**
 * A box complex with its dual graph when the top dimension is d-1.
 */
typedef struct PlqComplex PlqComplex;

/**
 * A plaquette configuration on some complex.
 */
typedef struct PlqConfig PlqConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *plq_status_message(enum PlqStatus status);

/**
 * Builds the complex of all cells up to dimension `top` of [0,e_1] × … × [0,e_d].
 *
 * # Safety
 * `extents` must point to `d` integers and `out` must be writable.
 */
enum PlqStatus plq_complex_new(const int64_t *extents,
                               size_t d,
                               size_t top,
                               struct PlqComplex **out);

/**
 * # Safety
 * `cx` must come from `plq_complex_new` and not be used afterwards; null is ignored.
 */
void plq_complex_free(struct PlqComplex *cx);

/**
 * Number of k-cells of the complex.
 *
 * # Safety
 * `cx` must be a live handle and `out` writable.
 */
enum PlqStatus plq_complex_cell_count(const struct PlqComplex *cx, size_t k, size_t *out);

/**
 * An empty configuration (no state variable occupied).
 *
 * # Safety
 * `cx` must be a live handle and `out` writable.
 */
enum PlqStatus plq_config_new(const struct PlqComplex *cx,
                              enum PlqBoundary bc,
                              struct PlqConfig **out);

/**
 * # Safety
 * `cfg` must come from this library and not be used afterwards; null is ignored.
 */
void plq_config_free(struct PlqConfig *cfg);

/**
 * Sets one top cell; forced cells of the boundary condition are rejected.
 *
 * # Safety
 * `cx` and `cfg` must be live handles, `cfg` built on `cx`.
 */
enum PlqStatus plq_config_set(const struct PlqComplex *cx,
                              struct PlqConfig *cfg,
                              size_t cell,
                              bool occupied);

/**
 * Whether a top cell counts as occupied (forced cells included).
 *
 * # Safety
 * `cx` and `cfg` must be live handles and `out` writable.
 */
enum PlqStatus plq_config_get(const struct PlqComplex *cx,
                              const struct PlqConfig *cfg,
                              size_t cell,
                              bool *out);

/**
 * Final configuration of a PRCM chain with Z_q coefficients after `sweeps` sweeps.
 *
 * # Safety
 * `cx` must be a live handle and `out` writable.
 */
enum PlqStatus plq_sample(const struct PlqComplex *cx,
                          double p,
                          uint64_t q,
                          enum PlqBoundary bc,
                          size_t sweeps,
                          uint64_t seed,
                          struct PlqConfig **out);

/**
 * V_γ for γ = ∂r with Z_q coefficients (q = 0 for Z), by Smith normal form.
 *
 * # Safety
 * Handles must be live; `lo` and `hi` must each point to d integers.
 */
enum PlqStatus plq_null_homology(const struct PlqComplex *cx,
                                 const struct PlqConfig *cfg,
                                 const int64_t *lo,
                                 const int64_t *hi,
                                 uint64_t q,
                                 bool *out);

/**
 * The same event decided by linking numbers on the dual graph (top = d-1).
 *
 * # Safety
 * Handles must be live; `lo` and `hi` must each point to d integers.
 */
enum PlqStatus plq_v_gamma_dual(const struct PlqComplex *cx,
                                const struct PlqConfig *cfg,
                                const int64_t *lo,
                                const int64_t *hi,
                                uint64_t q,
                                bool *out);

/**
 * Dual parameter p* = (1-p)q / ((1-p)q + p).
 */
double plq_p_star(double p, double q);

/**
 * V_γ over Z and over Z_q for the tube example with linking number k.
 *
 * # Safety
 * `over_z` and `over_q` must be writable.
 */
enum PlqStatus plq_anomaly(int64_t k, uint64_t q, bool *over_z, bool *over_q);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLAQUETTE_H */
